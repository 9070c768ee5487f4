import { deflateSync, inflateSync } from "node:zlib";
import type { Zlib } from "../src/core/png.js";

export const nodeZlib: Zlib = {
  deflate: (data) => new Uint8Array(deflateSync(data)),
  inflate: (data) => new Uint8Array(inflateSync(data)),
};
