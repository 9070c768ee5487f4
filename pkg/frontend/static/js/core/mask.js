/**
 * Mask editing model, independent of any canvas: strokes are data, the
 * raster is recomputed from the stroke list at source resolution, so undo
 * restores the previous raster exactly and the PNG sent to the service is
 * pixel-identical to what the tools produced.
 */
export const VISIBLE = 255;
export const MASKED = 0;
export class MaskModel {
    width;
    height;
    strokes = [];
    constructor(width, height) {
        if (width < 1 || height < 1)
            throw new Error("mask dimensions must be positive");
        this.width = width;
        this.height = height;
    }
    get strokeCount() {
        return this.strokes.length;
    }
    addBox(x, y, w, h, erase = false) {
        if (w <= 0 || h <= 0)
            throw new Error("box needs positive width and height");
        this.strokes.push({ kind: "box", x, y, w, h, erase });
    }
    addBrush(points, radius, erase = false) {
        if (points.length === 0)
            throw new Error("brush stroke needs at least one point");
        if (radius <= 0)
            throw new Error("brush radius must be positive");
        this.strokes.push({ kind: "brush", points: points.map((p) => ({ ...p })), radius, erase });
    }
    undo() {
        return this.strokes.pop() !== undefined;
    }
    clear() {
        this.strokes = [];
    }
    /**
     * Rasterize the stroke list: every pixel starts visible (255); mask
     * strokes paint 0, eraser strokes restore 255, in order.
     */
    rasterize() {
        const grid = new Uint8Array(this.width * this.height).fill(VISIBLE);
        for (const s of this.strokes) {
            const value = s.erase ? VISIBLE : MASKED;
            if (s.kind === "box")
                this.paintBox(grid, s, value);
            else
                this.paintBrush(grid, s, value);
        }
        return grid;
    }
    maskedCount() {
        const grid = this.rasterize();
        let n = 0;
        for (const v of grid)
            if (v === MASKED)
                n++;
        return n;
    }
    /** null when submittable; otherwise a user-facing message. */
    validate() {
        const masked = this.maskedCount();
        if (masked === 0)
            return "mask is empty: paint the region to fill";
        if (masked === this.width * this.height)
            return "mask must leave context";
        return null;
    }
    paintBox(grid, s, value) {
        const x0 = Math.max(0, Math.floor(s.x));
        const y0 = Math.max(0, Math.floor(s.y));
        const x1 = Math.min(this.width, Math.ceil(s.x + s.w));
        const y1 = Math.min(this.height, Math.ceil(s.y + s.h));
        for (let y = y0; y < y1; y++) {
            grid.fill(value, y * this.width + x0, y * this.width + x1);
        }
    }
    paintBrush(grid, s, value) {
        const stamp = (cx, cy) => {
            const r = s.radius;
            const x0 = Math.max(0, Math.floor(cx - r));
            const x1 = Math.min(this.width - 1, Math.ceil(cx + r));
            const y0 = Math.max(0, Math.floor(cy - r));
            const y1 = Math.min(this.height - 1, Math.ceil(cy + r));
            for (let y = y0; y <= y1; y++) {
                for (let x = x0; x <= x1; x++) {
                    const dx = x - cx;
                    const dy = y - cy;
                    if (dx * dx + dy * dy <= r * r)
                        grid[y * this.width + x] = value;
                }
            }
        };
        let prev = s.points[0];
        stamp(prev.x, prev.y);
        for (const p of s.points.slice(1)) {
            // interpolate along the segment so fast strokes stay solid
            const steps = Math.max(1, Math.ceil(Math.hypot(p.x - prev.x, p.y - prev.y)));
            for (let i = 1; i <= steps; i++) {
                stamp(prev.x + ((p.x - prev.x) * i) / steps, prev.y + ((p.y - prev.y) * i) / steps);
            }
            prev = p;
        }
    }
}
