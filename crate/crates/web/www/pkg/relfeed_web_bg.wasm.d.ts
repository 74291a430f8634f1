/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_simulationdemo_free: (a: number, b: number) => void;
export const dciScores: (a: number, b: number) => [number, number, number, number];
export const separatingLoss: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const simulationdemo_done: (a: number) => number;
export const simulationdemo_new: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number];
export const simulationdemo_step: (a: number) => [number, number, number, number];
export const simulationdemo_target: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
