/* tslint:disable */
/* eslint-disable */

/**
 * Cell corrector for a(y) = 1 / (base + amplitude cos 2 pi y), with the
 * closed-form reference and the effective coefficient.
 */
export function corrector_1d(base: number, amplitude: number, n: number): string;

/**
 * Fine oscillating solve vs the homogenized solve at one epsilon: final
 * profiles and the corrector metrics.
 */
export function fine_vs_homogenized(eps_denominator: number, r: number, c_star: number): string;

/**
 * Critical-regime homogenized matrix of the rotating-anisotropy family:
 * entries over time plus assembled and formula-based skew parts.
 */
export function skew_evolution(c_star: number, contrast: number, rate: number, n: number, steps: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly corrector_1d: (a: number, b: number, c: number) => [number, number, number, number];
    readonly fine_vs_homogenized: (a: number, b: number, c: number) => [number, number, number, number];
    readonly skew_evolution: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
