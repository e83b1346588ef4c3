/** The two patch classes the backend accepts. */
export type Label = 'healthy' | 'lesion';

/** Body of POST /api/patches. */
export interface PatchSubmission {
  id: string;
  x: number;
  y: number;
  label: Label;
}

/** One manifest row whose filename encodes its source crop. */
export interface ManifestEntry {
  path: string;
  label: Label;
  imageId: string;
  x: number;
  y: number;
}

/** Non-2xx response, carrying the status and the server's message. */
export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

type FetchFn = (url: string, init?: RequestInit) => Promise<Response>;

async function errorFrom(res: Response): Promise<ApiError> {
  const text = await res.text();
  let message = text || res.statusText;
  try {
    const body = JSON.parse(text);
    if (body && typeof body.detail === 'string') message = body.detail;
  } catch {
    // non-JSON error body; keep the raw text
  }
  return new ApiError(res.status, message);
}

/**
 * Thin client for the annotation backend. All methods reject with ApiError
 * on non-2xx responses; network failures reject with whatever fetch threw.
 */
export class ApiClient {
  private readonly base: string;
  private readonly fetchFn: FetchFn;

  constructor(base = '', fetchFn: FetchFn = (url, init) => fetch(url, init)) {
    this.base = base.replace(/\/$/, '');
    this.fetchFn = fetchFn;
  }

  /** GET /api/images -> sorted image ids. */
  async listImages(): Promise<string[]> {
    const res = await this.fetchFn(`${this.base}/api/images`);
    if (!res.ok) throw await errorFrom(res);
    const body = await res.json();
    return body.images as string[];
  }

  /** URL a plain <img> or canvas can load the source PNG from. */
  imageUrl(id: string): string {
    return `${this.base}/api/images/${encodeURIComponent(id)}`;
  }

  /** POST /api/patches -> stored patch path (e.g. "lesion/f1_x10_y20.png"). */
  async submitPatch(sub: PatchSubmission): Promise<string> {
    const res = await this.fetchFn(`${this.base}/api/patches`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(sub),
    });
    if (!res.ok) throw await errorFrom(res);
    const body = await res.json();
    return body.patch as string;
  }

  /** GET /api/manifest -> raw CSV text ("" when nothing is annotated yet). */
  async fetchManifest(): Promise<string> {
    const res = await this.fetchFn(`${this.base}/api/manifest`);
    if (!res.ok) throw await errorFrom(res);
    return res.text();
  }
}

const PATCH_NAME = /^(.+)_x(\d+)_y(\d+)\.png$/;

/**
 * Parse manifest CSV into entries with crop coordinates recovered from the
 * backend's "<label>/<id>_x<X>_y<Y>.png" naming. Rows with extra columns
 * (annotator, timestamp) keep only path and label; rows that do not match
 * the naming scheme or carry an unknown label are skipped, since they
 * cannot be drawn as overlays. Paths never contain commas (ids are
 * restricted to [A-Za-z0-9._-]), so a plain split is enough.
 */
export function parseManifest(csv: string): ManifestEntry[] {
  const entries: ManifestEntry[] = [];
  for (const line of csv.split('\n')) {
    const fields = line.trim().split(',');
    if (fields.length < 2) continue;
    const [path, label] = fields;
    if (label !== 'healthy' && label !== 'lesion') continue;
    const name = path.split('/').pop() ?? '';
    const m = PATCH_NAME.exec(name);
    if (!m) continue;
    entries.push({
      path,
      label,
      imageId: m[1],
      x: Number(m[2]),
      y: Number(m[3]),
    });
  }
  return entries;
}
