/**
 * Minimal PNG codec for 8-bit grayscale / RGB / RGBA, non-interlaced.
 *
 * The zlib primitives are injected so the same code runs under node
 * (node:zlib) and in tests; the browser app normally uses canvas instead.
 * Decoding implements all five scanline filters since the service's PNGs
 * are written by an encoder that picks filters adaptively.
 */
const SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];
const COLOR_TYPE_OF_CHANNELS = { 1: 0, 3: 2, 4: 6 };
const CHANNELS_OF_COLOR_TYPE = { 0: 1, 2: 3, 6: 4 };
const crcTable = (() => {
    const table = new Uint32Array(256);
    for (let n = 0; n < 256; n++) {
        let c = n;
        for (let k = 0; k < 8; k++)
            c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
        table[n] = c >>> 0;
    }
    return table;
})();
function crc32(bytes) {
    let c = 0xffffffff;
    for (const b of bytes)
        c = crcTable[(c ^ b) & 0xff] ^ (c >>> 8);
    return (c ^ 0xffffffff) >>> 0;
}
function be32(value) {
    return new Uint8Array([(value >>> 24) & 0xff, (value >>> 16) & 0xff, (value >>> 8) & 0xff, value & 0xff]);
}
function chunk(type, payload) {
    const typeBytes = new TextEncoder().encode(type);
    const body = new Uint8Array(typeBytes.length + payload.length);
    body.set(typeBytes);
    body.set(payload, typeBytes.length);
    const out = new Uint8Array(4 + body.length + 4);
    out.set(be32(payload.length));
    out.set(body, 4);
    out.set(be32(crc32(body)), 4 + body.length);
    return out;
}
export function encodePng(img, zlib) {
    const colorType = COLOR_TYPE_OF_CHANNELS[img.channels];
    if (colorType === undefined)
        throw new Error(`unsupported channel count ${img.channels}`);
    if (img.data.length !== img.width * img.height * img.channels) {
        throw new Error("pixel buffer length does not match dimensions");
    }
    const ihdr = new Uint8Array(13);
    ihdr.set(be32(img.width));
    ihdr.set(be32(img.height), 4);
    ihdr[8] = 8; // bit depth
    ihdr[9] = colorType;
    // compression, filter, interlace all zero
    const stride = img.width * img.channels;
    const raw = new Uint8Array((stride + 1) * img.height);
    for (let y = 0; y < img.height; y++) {
        raw[y * (stride + 1)] = 0; // filter: None
        raw.set(img.data.subarray(y * stride, (y + 1) * stride), y * (stride + 1) + 1);
    }
    const idat = zlib.deflate(raw);
    const parts = [
        new Uint8Array(SIGNATURE),
        chunk("IHDR", ihdr),
        chunk("IDAT", idat),
        chunk("IEND", new Uint8Array(0)),
    ];
    const total = parts.reduce((n, p) => n + p.length, 0);
    const out = new Uint8Array(total);
    let off = 0;
    for (const p of parts) {
        out.set(p, off);
        off += p.length;
    }
    return out;
}
function paeth(a, b, c) {
    const p = a + b - c;
    const pa = Math.abs(p - a);
    const pb = Math.abs(p - b);
    const pc = Math.abs(p - c);
    if (pa <= pb && pa <= pc)
        return a;
    if (pb <= pc)
        return b;
    return c;
}
export function decodePng(bytes, zlib) {
    for (let i = 0; i < 8; i++) {
        if (bytes[i] !== SIGNATURE[i])
            throw new Error("not a PNG");
    }
    const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
    let off = 8;
    let width = 0;
    let height = 0;
    let channels = 0;
    const idatParts = [];
    while (off < bytes.length) {
        const len = view.getUint32(off);
        const type = new TextDecoder().decode(bytes.subarray(off + 4, off + 8));
        const payload = bytes.subarray(off + 8, off + 8 + len);
        if (type === "IHDR") {
            width = view.getUint32(off + 8);
            height = view.getUint32(off + 12);
            const bitDepth = payload[8];
            const colorType = payload[9];
            const interlace = payload[12];
            if (bitDepth !== 8)
                throw new Error(`unsupported bit depth ${bitDepth}`);
            if (interlace !== 0)
                throw new Error("interlaced PNG not supported");
            const ch = CHANNELS_OF_COLOR_TYPE[colorType];
            if (ch === undefined)
                throw new Error(`unsupported color type ${colorType}`);
            channels = ch;
        }
        else if (type === "IDAT") {
            idatParts.push(payload);
        }
        else if (type === "IEND") {
            break;
        }
        off += 12 + len;
    }
    if (!width || !height || !channels)
        throw new Error("missing IHDR");
    const compressed = new Uint8Array(idatParts.reduce((n, p) => n + p.length, 0));
    let ioff = 0;
    for (const p of idatParts) {
        compressed.set(p, ioff);
        ioff += p.length;
    }
    const raw = zlib.inflate(compressed);
    const stride = width * channels;
    if (raw.length !== (stride + 1) * height)
        throw new Error("corrupt scanline data");
    const out = new Uint8Array(stride * height);
    for (let y = 0; y < height; y++) {
        const filter = raw[y * (stride + 1)];
        const line = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
        const prev = y > 0 ? out.subarray((y - 1) * stride, y * stride) : null;
        const cur = out.subarray(y * stride, (y + 1) * stride);
        for (let x = 0; x < stride; x++) {
            const a = x >= channels ? cur[x - channels] : 0;
            const b = prev ? prev[x] : 0;
            const c = prev && x >= channels ? prev[x - channels] : 0;
            let v = line[x];
            switch (filter) {
                case 0:
                    break;
                case 1:
                    v = (v + a) & 0xff;
                    break;
                case 2:
                    v = (v + b) & 0xff;
                    break;
                case 3:
                    v = (v + ((a + b) >> 1)) & 0xff;
                    break;
                case 4:
                    v = (v + paeth(a, b, c)) & 0xff;
                    break;
                default:
                    throw new Error(`unknown filter ${filter}`);
            }
            cur[x] = v;
        }
    }
    return { width, height, channels, data: out };
}
export function toBase64(bytes) {
    let bin = "";
    for (const b of bytes)
        bin += String.fromCharCode(b);
    // btoa exists in browsers and node >= 16
    return btoa(bin);
}
export function fromBase64(b64) {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++)
        out[i] = bin.charCodeAt(i);
    return out;
}
