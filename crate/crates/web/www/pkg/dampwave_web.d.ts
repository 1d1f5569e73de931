/* tslint:disable */
/* eslint-disable */

/**
 * Chafee-Infante flow on `(0, pi)` from `amplitude * sin(mode x)`, started at
 * rest for the damped wave and integrated for `duration` under both flows.
 *
 * Layout: `[x (n), u_eps(T) (n), u_0(T) (n), t (m), |u_eps|_L2 (m), |u_0|_L2 (m)]`
 * with `m` recorded times.
 */
export function simulate(n: number, eps: number, lambda: number, amplitude: number, mode: number, duration: number, lifted: boolean): Float64Array;

/**
 * Semidistance from `A_eps` to the lifted parabolic attractor over `ladder` on a
 * small Chafee-Infante problem.
 *
 * Layout: `[semidistance (ladder.len()), sup |v|^2 + eps |w|^2 (ladder.len())]`.
 */
export function sweep(n: number, lambda: number, members: number, ladder: Float64Array, seed: number): Float64Array;

/**
 * Cutoff tail energies on `(-50, 50)` for a bump of radius 3 under a source
 * `lambda exp(-x^2 / 4)` localized near the origin.
 *
 * Layout: `[t (m), tail k=5 (m), tail k=10 (m), tail k=20 (m), c_5, c_10, c_20]`.
 */
export function tails(eps: number, lambda: number, duration: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly simulate: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly sweep: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly tails: (a: number, b: number, c: number) => [number, number, number, number];
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
