/* tslint:disable */
/* eslint-disable */

/**
 * A scalar series with a volatile middle third, for the filter demo.
 */
export function demoSeries(t_len: number, seed: number): Float64Array;

export function filterSeries(y: Float64Array, sd_low: number, sd_high: number, stay_low: number, stay_high: number): Float64Array;

export function impulseResponses(a: Float64Array, b: Float64Array, n: number, lags: number, horizon: number, shock: number, norm_var: number, norm_value: number): Float64Array;

export function spikeSlabPrior(k: number, k_restricting: number, scale: number, shape: number, draws: number, bins: number, range: number, seed: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly demoSeries: (a: number, b: number) => [number, number];
    readonly filterSeries: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly impulseResponses: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number) => [number, number, number, number];
    readonly spikeSlabPrior: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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
