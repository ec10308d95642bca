/** Seed-placement console: upload an image, click seeds per object, run the
 * segmentation, inspect fuzzy connectedness overlays, add seeds where growth
 * was blocked, rerun, and compare revisions. */

import { ApiError, ServiceClient } from "./api.js";
import {
  canRun,
  clearSuggestions,
  completedRevisions,
  completeRevision,
  beginRevision,
  deleteSeed,
  failRevision,
  initialState,
  moveSeed,
  openSession,
  placeSeed,
  seedsRequestBody,
  selectRevision,
  selectTool,
  addObject,
  setSuggestions,
  type UiState,
} from "./state.js";
import {
  canvasToImage,
  identityViewport,
  imageToCanvas,
  inBounds,
  panBy,
  zoomAt,
  type Viewport,
} from "./transform.js";

export const OBJECT_COLORS = [
  "#e63c32",
  "#3c78e6",
  "#3cc85a",
  "#f0c828",
  "#aa50dc",
  "#ff8c00",
  "#00c8c8",
  "#e664b4",
];

export interface AppOptions {
  client: ServiceClient;
  document?: Document;
  pollIntervalMs?: number;
  sleep?: (ms: number) => Promise<void>;
}

export class App {
  state: UiState = initialState();
  viewport: Viewport = identityViewport();
  readonly root: HTMLElement;
  private readonly doc: Document;
  private readonly client: ServiceClient;
  private readonly pollIntervalMs: number;
  private readonly sleep?: (ms: number) => Promise<void>;

  private els!: {
    status: HTMLElement;
    toolbar: HTMLElement;
    tools: HTMLElement;
    viewportEl: HTMLElement;
    world: HTMLElement;
    baseImage: HTMLImageElement;
    overlayImage: HTMLImageElement;
    compareImage: HTMLImageElement;
    markers: HTMLElement;
    seedList: HTMLElement;
    revisionSelect: HTMLSelectElement;
    compareSelect: HTMLSelectElement;
    overlayModeSelect: HTMLSelectElement;
    overlayObjectSelect: HTMLSelectElement;
    opacitySlider: HTMLInputElement;
    runButton: HTMLButtonElement;
    suggestButton: HTMLButtonElement;
    clearSuggestionsButton: HTMLButtonElement;
    kInput: HTMLInputElement;
    fileInput: HTMLInputElement;
    scalesReadout: HTMLElement;
  };

  constructor(root: HTMLElement, options: AppOptions) {
    this.root = root;
    this.client = options.client;
    this.doc = options.document ?? root.ownerDocument;
    this.pollIntervalMs = options.pollIntervalMs ?? 1000;
    this.sleep = options.sleep;
    this.buildDom();
    this.render();
  }

  // ------------------------------------------------------------------
  // controller methods (also driven directly by tests)
  // ------------------------------------------------------------------

  async loadImageBytes(bytes: ArrayBuffer | Uint8Array | Blob): Promise<void> {
    try {
      const info = await this.client.createSession(bytes);
      this.state = openSession(this.state, info.id, info.width, info.height);
      this.viewport = identityViewport();
      this.els.baseImage.src = this.client.imageUrl(info.id);
      this.setStatus(`loaded ${info.width}x${info.height} image`);
    } catch (err) {
      this.setStatus(this.describe(err), true);
    }
    this.render();
  }

  /** Map a viewport click through zoom/pan and drop a seed for the active tool. */
  clickAt(canvasX: number, canvasY: number): void {
    if (this.state.sessionId === null) return;
    const pixel = canvasToImage(this.viewport, canvasX, canvasY);
    if (!inBounds(this.state.imageWidth, this.state.imageHeight, pixel)) {
      this.flash();
      return;
    }
    const next = placeSeed(this.state, pixel.x, pixel.y);
    if (next === null) {
      this.flash();
      return;
    }
    this.state = next;
    this.render();
  }

  removeSeed(index: number): void {
    this.state = deleteSeed(this.state, index);
    this.render();
  }

  dragSeedTo(index: number, canvasX: number, canvasY: number): void {
    const pixel = canvasToImage(this.viewport, canvasX, canvasY);
    this.state = moveSeed(this.state, index, pixel.x, pixel.y);
    this.render();
  }

  chooseTool(object: number): void {
    this.state = selectTool(this.state, object);
    this.render();
  }

  addObjectTool(): void {
    this.state = addObject(this.state);
    this.render();
  }

  async run(): Promise<void> {
    if (!canRun(this.state) || this.state.sessionId === null) return;
    const sessionId = this.state.sessionId;
    const body = seedsRequestBody(this.state);
    const config = { affinity: this.affinityMode() };
    try {
      const { revision } = await this.client.startSegment(sessionId, body, config);
      this.state = beginRevision(this.state, revision);
      this.setStatus(`revision ${revision} running...`);
      this.render();
      const result = await this.client.pollResult(sessionId, revision, {
        intervalMs: this.pollIntervalMs,
        sleep: this.sleep,
      });
      this.state = completeRevision(this.state, revision, result);
      const scales = Object.entries(result.scales)
        .map(([m, side]) => `obj ${m}: ${side}x${side}`)
        .join(", ");
      this.setStatus(`revision ${revision} done in ${result.seconds.toFixed(2)}s (${scales})`);
    } catch (err) {
      const failed = this.state.revisions.at(-1);
      if (failed && failed.status === "running") {
        this.state = failRevision(this.state, failed.index, this.describe(err));
      }
      this.setStatus(this.describe(err), true);
    }
    this.render();
  }

  async suggestSeeds(k: number): Promise<void> {
    if (this.state.sessionId === null) return;
    try {
      const proposal = await this.client.autoseed(this.state.sessionId, k);
      this.state = setSuggestions(this.state, proposal.seeds.objects);
      this.setStatus(`proposed ${proposal.seeds.objects.length} classes; drag or delete before running`);
    } catch (err) {
      this.setStatus(this.describe(err), true);
    }
    this.render();
  }

  rejectSuggestions(): void {
    this.state = clearSuggestions(this.state);
    this.render();
  }

  showRevision(index: number): void {
    this.state = selectRevision(this.state, index);
    this.render();
  }

  compareWith(index: number | null): void {
    this.state = { ...this.state, compareWith: index };
    this.render();
  }

  setOverlayMode(mode: "crisp" | "object" | "compare"): void {
    this.state = { ...this.state, overlayMode: mode };
    this.render();
  }

  setOverlayObject(object: number): void {
    this.state = { ...this.state, overlayObject: object };
    this.render();
  }

  setOpacity(opacity: number): void {
    this.state = { ...this.state, opacity };
    this.render();
  }

  zoom(factor: number, cx = 0, cy = 0): void {
    this.viewport = zoomAt(this.viewport, factor, cx, cy);
    this.render();
  }

  pan(dx: number, dy: number): void {
    this.viewport = panBy(this.viewport, dx, dy);
    this.render();
  }

  /** Sidebar rows as structured data; used by tests for fidelity checks. */
  seedRows(): { index: number; object: number; x: number; y: number; suggested: boolean }[] {
    return this.state.seeds.map((s, index) => ({
      index,
      object: s.object,
      x: s.x,
      y: s.y,
      suggested: s.suggested,
    }));
  }

  // ------------------------------------------------------------------
  // DOM
  // ------------------------------------------------------------------

  private buildDom(): void {
    const doc = this.doc;
    const make = <K extends keyof HTMLElementTagNameMap>(
      tag: K,
      className: string,
      parent: HTMLElement,
    ): HTMLElementTagNameMap[K] => {
      const el = doc.createElement(tag);
      if (className) el.className = className;
      parent.appendChild(el);
      return el;
    };

    this.root.classList.add("fuzzyseg-app");
    const header = make("header", "header", this.root);
    const title = make("span", "title", header);
    title.textContent = "fuzzyseg console";
    const fileInput = make("input", "file-input", header);
    fileInput.type = "file";
    fileInput.accept = "image/png,.pgm";
    const status = make("span", "status", header);

    const toolbar = make("div", "toolbar", this.root);
    const tools = make("div", "tools", toolbar);
    const addObjectButton = make("button", "add-object", toolbar);
    addObjectButton.textContent = "+ object";
    const runButton = make("button", "run", toolbar);
    runButton.textContent = "Run segmentation";
    const kInput = make("input", "k-input", toolbar);
    kInput.type = "number";
    kInput.value = "2";
    const suggestButton = make("button", "suggest", toolbar);
    suggestButton.textContent = "Suggest seeds";
    const clearSuggestionsButton = make("button", "clear-suggestions", toolbar);
    clearSuggestionsButton.textContent = "Reject suggestions";
    const zoomIn = make("button", "zoom-in", toolbar);
    zoomIn.textContent = "+";
    const zoomOut = make("button", "zoom-out", toolbar);
    zoomOut.textContent = "−";

    const mainArea = make("div", "main", this.root);
    const viewportEl = make("div", "viewport", mainArea);
    const world = make("div", "world", viewportEl);
    const baseImage = make("img", "base-image", world);
    const overlayImage = make("img", "overlay-image", world);
    const markers = make("div", "markers", world);
    const compareImage = make("img", "compare-image", mainArea);

    const sidebar = make("aside", "sidebar", mainArea);
    const seedHeading = make("h3", "", sidebar);
    seedHeading.textContent = "Seeds";
    const seedList = make("ul", "seed-list", sidebar);
    const controls = make("div", "controls", sidebar);

    const revisionLabel = make("label", "", controls);
    revisionLabel.textContent = "Revision";
    const revisionSelect = make("select", "revision-select", controls);
    const compareLabel = make("label", "", controls);
    compareLabel.textContent = "Compare with";
    const compareSelect = make("select", "compare-select", controls);
    const overlayModeSelect = make("select", "overlay-mode", controls);
    for (const mode of ["crisp", "object", "compare"]) {
      const option = doc.createElement("option");
      option.value = mode;
      option.textContent = mode;
      overlayModeSelect.appendChild(option);
    }
    const overlayObjectSelect = make("select", "overlay-object", controls);
    const opacitySlider = make("input", "opacity", controls);
    opacitySlider.type = "range";
    opacitySlider.min = "0";
    opacitySlider.max = "1";
    opacitySlider.step = "0.05";
    opacitySlider.value = String(this.state.opacity);
    const scalesReadout = make("div", "scales", sidebar);

    this.els = {
      status,
      toolbar,
      tools,
      viewportEl,
      world,
      baseImage,
      overlayImage,
      compareImage,
      markers,
      seedList,
      revisionSelect,
      compareSelect,
      overlayModeSelect,
      overlayObjectSelect,
      opacitySlider,
      runButton,
      suggestButton,
      clearSuggestionsButton,
      kInput,
      fileInput,
      scalesReadout,
    };

    fileInput.addEventListener("change", async () => {
      const file = fileInput.files?.[0];
      if (file) await this.loadImageBytes(await file.arrayBuffer());
    });
    viewportEl.addEventListener("click", (event) => {
      const rect = viewportEl.getBoundingClientRect();
      this.clickAt(event.clientX - rect.left, event.clientY - rect.top);
    });
    addObjectButton.addEventListener("click", () => this.addObjectTool());
    runButton.addEventListener("click", () => void this.run());
    suggestButton.addEventListener("click", () => void this.suggestSeeds(Number(kInput.value)));
    clearSuggestionsButton.addEventListener("click", () => this.rejectSuggestions());
    zoomIn.addEventListener("click", () => this.zoom(2));
    zoomOut.addEventListener("click", () => this.zoom(0.5));
    revisionSelect.addEventListener("change", () => {
      this.showRevision(Number(revisionSelect.value));
    });
    compareSelect.addEventListener("change", () => {
      const value = compareSelect.value;
      this.compareWith(value === "" ? null : Number(value));
    });
    overlayModeSelect.addEventListener("change", () => {
      this.setOverlayMode(overlayModeSelect.value as "crisp" | "object" | "compare");
    });
    overlayObjectSelect.addEventListener("change", () => {
      this.setOverlayObject(Number(overlayObjectSelect.value));
    });
    opacitySlider.addEventListener("input", () => {
      this.setOpacity(Number(opacitySlider.value));
    });
  }

  private affinityMode(): string {
    return "skew";
  }

  private describe(err: unknown): string {
    if (err instanceof ApiError) return `error ${err.status}: ${err.message}`;
    return err instanceof Error ? err.message : String(err);
  }

  private setStatus(text: string, isError = false): void {
    this.els.status.textContent = text;
    this.els.status.classList.toggle("error", isError);
  }

  private flash(): void {
    this.els.viewportEl.classList.add("flash");
    const clear = () => this.els.viewportEl.classList.remove("flash");
    if (typeof setTimeout === "function") setTimeout(clear, 150);
    else clear();
  }

  private selectedResult() {
    if (this.state.selectedRevision === null) return undefined;
    return this.state.revisions.find(
      (r) => r.index === this.state.selectedRevision && r.status === "done",
    )?.result;
  }

  render(): void {
    const doc = this.doc;
    const state = this.state;
    const els = this.els;

    // object tool buttons
    els.tools.textContent = "";
    for (let m = 1; m <= state.numObjects; m += 1) {
      const button = doc.createElement("button");
      button.className = `tool tool-${m}${state.tool === m ? " active" : ""}`;
      button.textContent = `object ${m}`;
      button.style.borderColor = OBJECT_COLORS[(m - 1) % OBJECT_COLORS.length];
      button.addEventListener("click", () => this.chooseTool(m));
      els.tools.appendChild(button);
    }

    // world transform mirrors the viewport
    els.world.style.transform = `translate(${this.viewport.panX}px, ${this.viewport.panY}px) scale(${this.viewport.scale})`;
    els.world.style.transformOrigin = "0 0";

    // markers with a 3x3 ghost outline showing the dilated footprint
    els.markers.textContent = "";
    state.seeds.forEach((seed, index) => {
      const marker = doc.createElement("div");
      marker.className = `marker object-${seed.object}${seed.suggested ? " suggested" : ""}`;
      marker.style.left = `${seed.x - 1}px`;
      marker.style.top = `${seed.y - 1}px`;
      marker.style.borderColor = OBJECT_COLORS[(seed.object - 1) % OBJECT_COLORS.length];
      marker.title = `object ${seed.object} seed (${seed.x}, ${seed.y})`;
      marker.dataset.index = String(index);
      els.markers.appendChild(marker);
    });

    // sidebar seed list, grouped by object: the rows read top to bottom in
    // exactly the order the request body will carry them
    els.seedList.textContent = "";
    for (let m = 1; m <= state.numObjects; m += 1) {
      state.seeds.forEach((seed, index) => {
        if (seed.object !== m) return;
        const row = doc.createElement("li");
        row.className = `seed-row object-${seed.object}`;
        const label = doc.createElement("span");
        label.textContent = `obj ${seed.object}: (${seed.x}, ${seed.y})${seed.suggested ? " *" : ""}`;
        const del = doc.createElement("button");
        del.className = "delete-seed";
        del.textContent = "×";
        del.addEventListener("click", () => this.removeSeed(index));
        row.appendChild(label);
        row.appendChild(del);
        els.seedList.appendChild(row);
      });
    }

    // run gating: never send a request while one is running
    els.runButton.disabled = !canRun(state);

    // revision selectors only offer completed revisions
    const completed = completedRevisions(state);
    els.revisionSelect.textContent = "";
    for (const revision of completed) {
      const option = doc.createElement("option");
      option.value = String(revision.index);
      option.textContent = `rev ${revision.index}`;
      if (state.selectedRevision === revision.index) option.selected = true;
      els.revisionSelect.appendChild(option);
    }
    els.compareSelect.textContent = "";
    const none = doc.createElement("option");
    none.value = "";
    none.textContent = "(none)";
    els.compareSelect.appendChild(none);
    for (const revision of completed) {
      const option = doc.createElement("option");
      option.value = String(revision.index);
      option.textContent = `rev ${revision.index}`;
      if (state.compareWith === revision.index) option.selected = true;
      els.compareSelect.appendChild(option);
    }

    // overlay object choices
    els.overlayObjectSelect.textContent = "";
    for (let m = 1; m <= state.numObjects; m += 1) {
      const option = doc.createElement("option");
      option.value = String(m);
      option.textContent = `object ${m}`;
      if (state.overlayObject === m) option.selected = true;
      els.overlayObjectSelect.appendChild(option);
    }

    // overlay image
    const result = this.selectedResult();
    if (result && state.overlayMode !== "compare") {
      const png =
        state.overlayMode === "crisp"
          ? result.crisp_png
          : result.connectedness_png[String(state.overlayObject)] ?? result.crisp_png;
      els.overlayImage.src = `data:image/png;base64,${png}`;
      els.overlayImage.style.display = "";
      els.overlayImage.style.opacity = String(state.opacity);
    } else {
      els.overlayImage.style.display = "none";
      els.overlayImage.removeAttribute("src");
    }

    // side-by-side comparison of two completed revisions
    const compareResult =
      state.overlayMode === "compare" && state.compareWith !== null
        ? state.revisions.find((r) => r.index === state.compareWith && r.status === "done")?.result
        : undefined;
    if (state.overlayMode === "compare" && result) {
      els.overlayImage.src = `data:image/png;base64,${result.crisp_png}`;
      els.overlayImage.style.display = "";
      els.overlayImage.style.opacity = String(state.opacity);
    }
    if (compareResult) {
      els.compareImage.src = `data:image/png;base64,${compareResult.crisp_png}`;
      els.compareImage.style.display = "";
    } else {
      els.compareImage.style.display = "none";
      els.compareImage.removeAttribute("src");
    }

    // scales and timing readout
    if (result) {
      const scales = Object.entries(result.scales)
        .map(([m, side]) => `object ${m}: ${side}×${side}`)
        .join("; ");
      els.scalesReadout.textContent = `${scales} — ${result.seconds.toFixed(2)}s`;
    } else {
      els.scalesReadout.textContent = "";
    }
  }
}

export function createApp(root: HTMLElement, options: AppOptions): App {
  return new App(root, options);
}
