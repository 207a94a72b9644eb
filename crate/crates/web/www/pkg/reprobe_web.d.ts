/* tslint:disable */
/* eslint-disable */

export class InversionDemo {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    generated_rgba(): Uint8Array;
    /**
     * `m_g` per iterate, `a_0` first.
     */
    m_g(): Float64Array;
    m_i(): Float64Array;
    /**
     * The shifted-input reference for the final `m_g`.
     */
    m_s(): number;
    static side(): number;
    /**
     * RGBA bytes, `side() x side()`.
     */
    target_rgba(): Uint8Array;
}

export function capacity_curve(m: number, p: number, n_max: number): Float64Array;

export function inversion(widths: Uint32Array, relu: boolean, iters: number, c: number, decay: boolean, blur: boolean, seed: number): InversionDemo;

export function probe(width: number, depth: number, sigma_out: number, count: number, seed: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_inversiondemo_free: (a: number, b: number) => void;
    readonly capacity_curve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly inversion: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
    readonly inversiondemo_generated_rgba: (a: number) => [number, number];
    readonly inversiondemo_m_g: (a: number) => [number, number];
    readonly inversiondemo_m_i: (a: number) => [number, number];
    readonly inversiondemo_m_s: (a: number) => number;
    readonly inversiondemo_side: () => number;
    readonly inversiondemo_target_rgba: (a: number) => [number, number];
    readonly probe: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
