/**
 * Browser wiring for the editor: load an image, paint or box-select the
 * region to replace, describe the desired content, and compare results of
 * different prompts side by side. Masks are rasterized at source
 * resolution, never at display resolution.
 */
import { InpaintClient, ServiceError } from "../core/api.js";
import { MASKED } from "../core/mask.js";
import { EditorSession } from "../core/session.js";
const $ = (id) => {
    const el = document.getElementById(id);
    if (!el)
        throw new Error(`missing element #${id}`);
    return el;
};
const state = {
    session: null,
    client: new InpaintClient(""),
    tool: "brush",
    brushSize: 12,
    dragStart: null,
    brushPoints: [],
    sourceImage: null,
};
function canvasEncodeMask(grid, width, height) {
    const canvas = document.createElement("canvas");
    canvas.width = width;
    canvas.height = height;
    const ctx = canvas.getContext("2d");
    const img = ctx.createImageData(width, height);
    for (let i = 0; i < grid.length; i++) {
        img.data[i * 4] = grid[i];
        img.data[i * 4 + 1] = grid[i];
        img.data[i * 4 + 2] = grid[i];
        img.data[i * 4 + 3] = 255;
    }
    ctx.putImageData(img, 0, 0);
    return canvas.toDataURL("image/png").split(",")[1];
}
function banner(message, kind = "info") {
    const el = $("banner");
    el.textContent = message;
    el.className = kind;
    el.style.display = message ? "block" : "none";
}
function redraw() {
    const session = state.session;
    const img = state.sourceImage;
    if (!session || !img)
        return;
    const canvas = $("editor");
    const ctx = canvas.getContext("2d");
    ctx.drawImage(img, 0, 0);
    const grid = session.mask.rasterize();
    const overlay = ctx.getImageData(0, 0, canvas.width, canvas.height);
    for (let i = 0; i < grid.length; i++) {
        if (grid[i] === MASKED) {
            overlay.data[i * 4] = Math.min(255, overlay.data[i * 4] * 0.3 + 180);
            overlay.data[i * 4 + 1] = overlay.data[i * 4 + 1] * 0.3;
            overlay.data[i * 4 + 2] = overlay.data[i * 4 + 2] * 0.3;
        }
    }
    ctx.putImageData(overlay, 0, 0);
}
function canvasPos(e) {
    const canvas = $("editor");
    const rect = canvas.getBoundingClientRect();
    // map display coordinates to source-resolution pixels
    return {
        x: ((e.clientX - rect.left) / rect.width) * canvas.width,
        y: ((e.clientY - rect.top) / rect.height) * canvas.height,
    };
}
function renderHistory() {
    const session = state.session;
    if (!session)
        return;
    const list = $("history");
    list.innerHTML = "";
    for (const entry of [...session.history].reverse()) {
        const card = document.createElement("div");
        card.className = "entry";
        const caption = document.createElement("p");
        caption.textContent = `#${entry.index} "${entry.text}" (seed ${entry.seed ?? "auto"})`;
        card.appendChild(caption);
        const row = document.createElement("div");
        row.className = "results";
        entry.response.results.forEach((b64, k) => {
            const img = document.createElement("img");
            img.src = `data:image/png;base64,${b64}`;
            img.title = `sample ${k}`;
            row.appendChild(img);
        });
        card.appendChild(row);
        const actions = document.createElement("div");
        const replayBtn = document.createElement("button");
        replayBtn.textContent = "replay";
        replayBtn.onclick = () => {
            void session.replay(entry.index).then(renderHistory, showError);
        };
        const exportBtn = document.createElement("button");
        exportBtn.textContent = "export";
        exportBtn.onclick = () => {
            const { filename, base64 } = session.exportEntry(entry);
            const a = document.createElement("a");
            a.href = `data:image/png;base64,${base64}`;
            a.download = filename;
            a.click();
        };
        actions.append(replayBtn, exportBtn);
        card.appendChild(actions);
        list.appendChild(card);
    }
}
function showError(err) {
    if (err instanceof ServiceError)
        banner(`service error [${err.code}]: ${err.message}`, "error");
    else
        banner(String(err), "error");
}
function loadImageFile(file) {
    const reader = new FileReader();
    reader.onload = () => {
        const url = reader.result;
        const img = new Image();
        img.onload = () => {
            if (img.width > 4096 || img.height > 4096) {
                banner("image exceeds the 4096px limit", "error");
                return;
            }
            const canvas = $("editor");
            canvas.width = img.width;
            canvas.height = img.height;
            state.sourceImage = img;
            state.session = new EditorSession({
                width: img.width,
                height: img.height,
                imageBase64: url.split(",")[1],
                client: state.client,
                encodeMask: canvasEncodeMask,
            });
            banner("");
            renderHistory();
            redraw();
        };
        img.src = url;
    };
    reader.readAsDataURL(file);
}
function bindEvents() {
    const canvas = $("editor");
    canvas.onmousedown = (e) => {
        if (!state.session)
            return;
        const p = canvasPos(e);
        if (state.tool === "box")
            state.dragStart = p;
        else
            state.brushPoints = [p];
    };
    canvas.onmousemove = (e) => {
        if (!state.session)
            return;
        if (state.tool !== "box" && state.brushPoints.length > 0) {
            state.brushPoints.push(canvasPos(e));
        }
    };
    canvas.onmouseup = (e) => {
        const session = state.session;
        if (!session)
            return;
        const p = canvasPos(e);
        if (state.tool === "box" && state.dragStart) {
            const x = Math.min(state.dragStart.x, p.x);
            const y = Math.min(state.dragStart.y, p.y);
            const w = Math.abs(p.x - state.dragStart.x);
            const h = Math.abs(p.y - state.dragStart.y);
            if (w >= 1 && h >= 1)
                session.mask.addBox(x, y, w, h);
            state.dragStart = null;
        }
        else if (state.brushPoints.length > 0) {
            session.mask.addBrush(state.brushPoints, state.brushSize, state.tool === "eraser");
            state.brushPoints = [];
        }
        redraw();
    };
    $("file").onchange = (e) => {
        const input = e.target;
        if (input.files?.[0])
            loadImageFile(input.files[0]);
    };
    for (const tool of ["brush", "box", "eraser"]) {
        $(`tool-${tool}`).onclick = () => {
            state.tool = tool;
            banner(`tool: ${tool}`);
        };
    }
    $("undo").onclick = () => {
        state.session?.mask.undo();
        redraw();
    };
    $("clear").onclick = () => {
        state.session?.mask.clear();
        redraw();
    };
    $("brush-size").oninput = (e) => {
        state.brushSize = Number(e.target.value);
    };
    $("submit").onclick = () => {
        const session = state.session;
        if (!session) {
            banner("load an image first", "error");
            return;
        }
        const text = $("prompt").value;
        const samples = Number($("samples").value) || 1;
        const seedRaw = $("seed").value;
        const seed = seedRaw === "" ? null : Number(seedRaw);
        session.composite = $("composite").value;
        try {
            banner("generating…");
            void session.submit(text, samples, seed).then((entry) => {
                banner(`#${entry.index} done in ${entry.response.timing_ms.toFixed(0)} ms`);
                renderHistory();
            }, showError);
        }
        catch (err) {
            showError(err);
        }
    };
}
async function pollHealth() {
    const el = $("health");
    try {
        const h = await state.client.health();
        el.textContent = h.status === "ready" ? `ready (${h.model_version})` : "loading…";
        el.className = h.status;
    }
    catch {
        el.textContent = "service unreachable";
        el.className = "down";
    }
}
function init() {
    const params = new URLSearchParams(location.search);
    state.client = new InpaintClient(params.get("service") ?? "http://127.0.0.1:8765");
    bindEvents();
    void pollHealth();
    setInterval(() => void pollHealth(), 5000);
}
init();
