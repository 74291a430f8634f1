/* tslint:disable */
/* eslint-disable */

export class SimulationDemo {
    free(): void;
    [Symbol.dispose](): void;
    constructor(n: number, attributes: number, noise: number, algorithm: string, seed: bigint);
    /**
     * One round as JSON.
     */
    step(): string;
    /**
     * The hidden target as a JSON tile.
     */
    target(): string;
    readonly done: boolean;
}

/**
 * `{disentanglement, completeness, per_latent, per_factor}` as JSON.
 */
export function dciScores(importance: string): string;

/**
 * `{loss, grad_similar, grad_dissimilar}` as JSON.
 */
export function separatingLoss(similar: string, dissimilar: string, tau: number, symmetric: boolean): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_simulationdemo_free: (a: number, b: number) => void;
    readonly dciScores: (a: number, b: number) => [number, number, number, number];
    readonly separatingLoss: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly simulationdemo_done: (a: number) => number;
    readonly simulationdemo_new: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number];
    readonly simulationdemo_step: (a: number) => [number, number, number, number];
    readonly simulationdemo_target: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
