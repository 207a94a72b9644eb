/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_inversiondemo_free: (a: number, b: number) => void;
export const capacity_curve: (a: number, b: number, c: number) => [number, number, number, number];
export const inversion: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
export const inversiondemo_generated_rgba: (a: number) => [number, number];
export const inversiondemo_m_g: (a: number) => [number, number];
export const inversiondemo_m_i: (a: number) => [number, number];
export const inversiondemo_m_s: (a: number) => number;
export const inversiondemo_side: () => number;
export const inversiondemo_target_rgba: (a: number) => [number, number];
export const probe: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
