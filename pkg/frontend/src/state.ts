/** Pure UI state and transitions. The seed list is the single source of
 * truth: markers, the sidebar, and outgoing request bodies all derive from
 * it, so what the user sees is exactly what the server receives. */

export interface SeedPoint {
  x: number;
  y: number;
  object: number;
  suggested: boolean;
}

export interface ResultBundle {
  scales: Record<string, number>;
  seconds: number;
  crisp_png: string;
  connectedness_png: Record<string, string>;
}

export type RevisionStatus = "running" | "done" | "failed";

export interface RevisionInfo {
  index: number;
  status: RevisionStatus;
  seeds: SeedPoint[];
  result?: ResultBundle;
  error?: string;
}

export type OverlayMode = "crisp" | "object" | "compare";

export interface UiState {
  sessionId: string | null;
  imageWidth: number;
  imageHeight: number;
  numObjects: number;
  tool: number; // active object id; 0 = pan/inspect
  seeds: SeedPoint[];
  revisions: RevisionInfo[];
  selectedRevision: number | null;
  compareWith: number | null;
  overlayMode: OverlayMode;
  overlayObject: number;
  opacity: number;
  running: boolean;
}

export function initialState(): UiState {
  return {
    sessionId: null,
    imageWidth: 0,
    imageHeight: 0,
    numObjects: 2,
    tool: 1,
    seeds: [],
    revisions: [],
    selectedRevision: null,
    compareWith: null,
    overlayMode: "crisp",
    overlayObject: 1,
    opacity: 0.7,
    running: false,
  };
}

export function openSession(
  state: UiState,
  sessionId: string,
  width: number,
  height: number,
): UiState {
  return { ...initialState(), sessionId, imageWidth: width, imageHeight: height };
}

/** Add a seed for the active object; null when outside the image or no tool. */
export function placeSeed(state: UiState, x: number, y: number): UiState | null {
  if (state.tool < 1) return null;
  if (x < 0 || y < 0 || x >= state.imageWidth || y >= state.imageHeight) return null;
  const seed: SeedPoint = { x, y, object: state.tool, suggested: false };
  return { ...state, seeds: [...state.seeds, seed] };
}

export function deleteSeed(state: UiState, index: number): UiState {
  return { ...state, seeds: state.seeds.filter((_, i) => i !== index) };
}

export function moveSeed(state: UiState, index: number, x: number, y: number): UiState {
  if (x < 0 || y < 0 || x >= state.imageWidth || y >= state.imageHeight) return state;
  const seeds = state.seeds.map((s, i) => (i === index ? { ...s, x, y } : s));
  return { ...state, seeds };
}

export function selectTool(state: UiState, object: number): UiState {
  return { ...state, tool: object };
}

export function addObject(state: UiState): UiState {
  const numObjects = state.numObjects + 1;
  return { ...state, numObjects, tool: numObjects };
}

/** Replace any previous suggestions with auto-proposed seeds. */
export function setSuggestions(
  state: UiState,
  proposals: { id: number; points: [number, number][] }[],
): UiState {
  const manual = state.seeds.filter((s) => !s.suggested);
  const suggested: SeedPoint[] = [];
  let maxObject = 0;
  for (const obj of proposals) {
    maxObject = Math.max(maxObject, obj.id);
    for (const [x, y] of obj.points) {
      suggested.push({ x, y, object: obj.id, suggested: true });
    }
  }
  return {
    ...state,
    seeds: [...manual, ...suggested],
    numObjects: Math.max(state.numObjects, maxObject),
  };
}

export function clearSuggestions(state: UiState): UiState {
  return { ...state, seeds: state.seeds.filter((s) => !s.suggested) };
}

export function seedsByObject(state: UiState): Map<number, SeedPoint[]> {
  const grouped = new Map<number, SeedPoint[]>();
  for (const seed of state.seeds) {
    const list = grouped.get(seed.object) ?? [];
    list.push(seed);
    grouped.set(seed.object, list);
  }
  return grouped;
}

/** Every declared object needs at least one seed before a run makes sense. */
export function canRun(state: UiState): boolean {
  if (state.sessionId === null || state.running) return false;
  const grouped = seedsByObject(state);
  for (let m = 1; m <= state.numObjects; m += 1) {
    if (!(grouped.get(m)?.length)) return false;
  }
  return state.numObjects >= 1;
}

/** The exact request body sent to the segment endpoint. */
export function seedsRequestBody(state: UiState): {
  objects: { id: number; points: [number, number][] }[];
} {
  const grouped = seedsByObject(state);
  const objects = [];
  for (let m = 1; m <= state.numObjects; m += 1) {
    const points = (grouped.get(m) ?? []).map((s) => [s.x, s.y] as [number, number]);
    objects.push({ id: m, points });
  }
  return { objects };
}

export function beginRevision(state: UiState, index: number): UiState {
  const revision: RevisionInfo = {
    index,
    status: "running",
    seeds: state.seeds.map((s) => ({ ...s })),
  };
  return { ...state, running: true, revisions: [...state.revisions, revision] };
}

export function completeRevision(
  state: UiState,
  index: number,
  result: ResultBundle,
): UiState {
  const revisions = state.revisions.map((r) =>
    r.index === index ? { ...r, status: "done" as const, result } : r,
  );
  return { ...state, running: false, revisions, selectedRevision: index };
}

export function failRevision(state: UiState, index: number, error: string): UiState {
  const revisions = state.revisions.map((r) =>
    r.index === index ? { ...r, status: "failed" as const, error } : r,
  );
  return { ...state, running: false, revisions };
}

export function completedRevisions(state: UiState): RevisionInfo[] {
  return state.revisions.filter((r) => r.status === "done");
}

export function selectRevision(state: UiState, index: number): UiState {
  const found = state.revisions.find((r) => r.index === index && r.status === "done");
  if (!found) return state;
  return { ...state, selectedRevision: index };
}
