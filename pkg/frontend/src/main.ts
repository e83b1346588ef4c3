import { ApiClient, ApiError, parseManifest, type Label } from './api.js';
import { PATCH_SIDE, screenToImage } from './geometry.js';
import { handleAnnotationKey } from './keyboard.js';
import {
  beginSubmit,
  initialState,
  nudge,
  overlaysFor,
  placeAt,
  selectImage,
  setLabel,
  submitFailed,
  submitSucceeded,
  zoomBy,
  type UiState,
} from './state.js';

const OVERLAY_COLORS: Record<Label, string> = {
  healthy: '#2e9e4f',
  lesion: '#d83a2e',
};

function requireEl<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as T;
}

class AnnotationPage {
  private state: UiState = initialState();
  private image: HTMLImageElement | null = null;

  private readonly gallery = requireEl<HTMLUListElement>('gallery');
  private readonly canvas = requireEl<HTMLCanvasElement>('canvas');
  private readonly preview = requireEl<HTMLCanvasElement>('preview');
  private readonly coords = requireEl<HTMLSpanElement>('coords');
  private readonly zoomLevel = requireEl<HTMLSpanElement>('zoom-level');
  private readonly banner = requireEl<HTMLDivElement>('banner');
  private readonly notice = requireEl<HTMLDivElement>('notice');
  private readonly submitBtn = requireEl<HTMLButtonElement>('submit');
  private readonly labelHealthy = requireEl<HTMLInputElement>('label-healthy');
  private readonly labelLesion = requireEl<HTMLInputElement>('label-lesion');

  constructor(private readonly api: ApiClient) {
    this.canvas.addEventListener('click', (e) => {
      const p = screenToImage(e.offsetX, e.offsetY, this.state.zoom);
      this.setState(placeAt(this.state, p.x, p.y));
    });
    this.submitBtn.addEventListener('click', () => void this.submit());
    this.labelHealthy.addEventListener('change', () =>
      this.setState(setLabel(this.state, 'healthy')),
    );
    this.labelLesion.addEventListener('change', () =>
      this.setState(setLabel(this.state, 'lesion')),
    );
    requireEl<HTMLButtonElement>('zoom-in').addEventListener('click', () =>
      this.setState(zoomBy(this.state, 2)),
    );
    requireEl<HTMLButtonElement>('zoom-out').addEventListener('click', () =>
      this.setState(zoomBy(this.state, 0.5)),
    );
    document.addEventListener('keydown', (e) => {
      const action = handleAnnotationKey(e);
      if (action === null) return;
      e.preventDefault();
      switch (action.type) {
        case 'nudge':
          this.setState(nudge(this.state, action.dx, action.dy));
          break;
        case 'label':
          this.setState(setLabel(this.state, action.label));
          break;
        case 'submit':
          void this.submit();
          break;
      }
    });
  }

  private setState(next: UiState): void {
    this.state = next;
    this.render();
  }

  private showError(message: string): void {
    this.setState({ ...this.state, error: message });
  }

  /** Populate the sidebar from GET /api/images. */
  async loadGallery(): Promise<void> {
    let ids: string[];
    try {
      ids = await this.api.listImages();
    } catch (err) {
      this.showError(`cannot reach the annotation backend: ${describe(err)}`);
      return;
    }
    this.gallery.textContent = '';
    if (ids.length === 0) {
      const li = document.createElement('li');
      li.className = 'placeholder';
      li.textContent = 'no images';
      this.gallery.appendChild(li);
      return;
    }
    for (const id of ids) {
      const li = document.createElement('li');
      const button = document.createElement('button');
      const thumb = document.createElement('img');
      thumb.src = this.api.imageUrl(id);
      thumb.alt = '';
      const name = document.createElement('span');
      name.textContent = id;
      button.append(thumb, name);
      button.addEventListener('click', () => void this.loadImage(id));
      li.appendChild(button);
      this.gallery.appendChild(li);
    }
  }

  /** Load one source image plus its already-annotated regions. */
  async loadImage(id: string): Promise<void> {
    const img = new Image();
    img.src = this.api.imageUrl(id);
    try {
      await img.decode();
    } catch {
      this.showError(`could not load image "${id}" from the backend`);
      return;
    }
    let overlays;
    try {
      overlays = overlaysFor(parseManifest(await this.api.fetchManifest()), id);
    } catch (err) {
      this.showError(`could not load the manifest: ${describe(err)}`);
      return;
    }
    this.image = img;
    this.setState(
      selectImage(this.state, id, img.naturalWidth, img.naturalHeight, overlays),
    );
  }

  /** POST the current selection; at most one submission runs at a time. */
  private async submit(): Promise<void> {
    const armed = beginSubmit(this.state);
    if (armed === this.state) return;
    this.setState(armed);
    const sel = armed.selection;
    if (sel === null || armed.imageId === null) return;
    try {
      await this.api.submitPatch({
        id: armed.imageId,
        x: sel.x,
        y: sel.y,
        label: armed.pendingLabel,
      });
      this.setState(submitSucceeded(this.state));
    } catch (err) {
      if (err instanceof ApiError) {
        this.setState(submitFailed(this.state, err.status, err.message));
      } else {
        this.setState(submitFailed(this.state, 0, `submission failed: ${describe(err)}`));
      }
    }
  }

  private render(): void {
    const s = this.state;
    this.banner.textContent = s.error ?? '';
    this.banner.classList.toggle('hidden', s.error === null);
    this.notice.textContent = s.notice ?? '';
    this.notice.classList.toggle('hidden', s.notice === null);
    this.coords.textContent = s.selection
      ? `x=${s.selection.x}, y=${s.selection.y} (${PATCH_SIDE}×${PATCH_SIDE})`
      : 'no selection';
    this.zoomLevel.textContent = `${s.zoom}×`;
    this.labelHealthy.checked = s.pendingLabel === 'healthy';
    this.labelLesion.checked = s.pendingLabel === 'lesion';
    this.submitBtn.disabled = s.selection === null || s.busy;
    this.drawCanvas();
    this.drawPreview();
  }

  private drawCanvas(): void {
    const s = this.state;
    if (this.image === null || s.imageId === null) return;
    const z = s.zoom;
    this.canvas.width = s.imageWidth * z;
    this.canvas.height = s.imageHeight * z;
    const ctx = this.canvas.getContext('2d');
    if (ctx === null) return;
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(this.image, 0, 0, s.imageWidth * z, s.imageHeight * z);
    ctx.lineWidth = 2;
    for (const o of s.overlays) {
      ctx.strokeStyle = OVERLAY_COLORS[o.label];
      ctx.strokeRect(o.x * z, o.y * z, PATCH_SIDE * z, PATCH_SIDE * z);
    }
    if (s.selection !== null) {
      ctx.strokeStyle = '#ffffff';
      ctx.setLineDash([5, 3]);
      ctx.strokeRect(
        s.selection.x * z,
        s.selection.y * z,
        PATCH_SIDE * z,
        PATCH_SIDE * z,
      );
      ctx.setLineDash([]);
    }
  }

  /** Magnified view of exactly the region a submit would store. */
  private drawPreview(): void {
    const ctx = this.preview.getContext('2d');
    if (ctx === null) return;
    ctx.clearRect(0, 0, this.preview.width, this.preview.height);
    const sel = this.state.selection;
    if (this.image === null || sel === null) return;
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(
      this.image,
      sel.x,
      sel.y,
      PATCH_SIDE,
      PATCH_SIDE,
      0,
      0,
      this.preview.width,
      this.preview.height,
    );
  }
}

function describe(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}

const page = new AnnotationPage(new ApiClient());
void page.loadGallery();
