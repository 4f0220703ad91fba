/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const corrector_1d: (a: number, b: number, c: number) => [number, number, number, number];
export const fine_vs_homogenized: (a: number, b: number, c: number) => [number, number, number, number];
export const skew_evolution: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
