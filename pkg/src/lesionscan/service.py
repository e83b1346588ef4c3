"""HTTP backend for the patch annotation workflow.

Serves source face images, accepts 50x50 crop submissions, and maintains
the same manifest CSV the dataset loader consumes, so annotations feed
training directly. A crop request names a source image and a top-left
corner; the server extracts exactly image[y:y+50, x:x+50], stores it as
``<label>/<id>_x<X>_y<Y>.png`` under the patch directory, and appends one
manifest row. Duplicate submissions (same id, x, y) are rejected with 409
regardless of label, so a region can only be re-labeled after an explicit
DELETE.

Manifest writes are serialized through a process-wide lock; concurrent
submissions never interleave rows.
"""

from __future__ import annotations

import csv
import re
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, HTMLResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .dataset import LABELS, PATCH_SIDE, load_patch_png, save_patch_png
from .errors import ConfigError, DatasetError

_ID_PATTERN = re.compile(r"^[A-Za-z0-9._-]+$")

_PLACEHOLDER_PAGE = """<!doctype html>
<html><head><title>lesionscan annotation backend</title></head>
<body>
<h1>lesionscan annotation backend</h1>
<p>The API is up. No UI bundle was configured; point --ui at a built
frontend to serve it here.</p>
<ul>
<li>GET /api/images</li>
<li>GET /api/images/{id}</li>
<li>POST /api/patches</li>
<li>GET /api/manifest</li>
<li>DELETE /api/patches/{name}</li>
</ul>
</body></html>
"""


class PatchSubmission(BaseModel):
    id: str
    x: int
    y: int
    label: str
    annotator: str = ""
    timestamp: str = ""


def create_app(image_dir, patch_dir, ui_dir=None) -> FastAPI:
    """Build the annotation service over an image directory and a patch sink.

    ``image_dir`` must exist and holds the source PNGs (the file stem is
    the image id). ``patch_dir`` is created if missing and receives the
    per-label patch files plus ``manifest.csv``. ``ui_dir``, when given,
    is served statically at the root; otherwise a placeholder page is.
    """
    image_dir = Path(image_dir)
    patch_dir = Path(patch_dir)
    if not image_dir.is_dir():
        raise ConfigError(f"image directory does not exist: {image_dir}")
    patch_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = patch_dir / "manifest.csv"
    write_lock = threading.Lock()

    app = FastAPI(title="lesionscan annotation backend")

    def _image_path(image_id: str) -> Path:
        if not _ID_PATTERN.match(image_id):
            raise HTTPException(status_code=404, detail=f"unknown image id {image_id!r}")
        path = image_dir / f"{image_id}.png"
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"unknown image id {image_id!r}")
        return path

    @app.get("/api/images")
    def list_images() -> dict:
        ids = sorted(p.stem for p in image_dir.glob("*.png"))
        return {"images": ids}

    @app.get("/api/images/{image_id}")
    def get_image(image_id: str) -> FileResponse:
        return FileResponse(_image_path(image_id), media_type="image/png")

    @app.post("/api/patches", status_code=201)
    def submit_patch(sub: PatchSubmission) -> dict:
        if sub.label not in LABELS:
            raise HTTPException(
                status_code=400,
                detail=f"label must be healthy or lesion, got {sub.label!r}",
            )
        source_path = _image_path(sub.id)
        try:
            pixels = load_patch_png(source_path)
        except DatasetError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        height, width = pixels.shape[0], pixels.shape[1]
        if not (0 <= sub.x and sub.x + PATCH_SIDE <= width
                and 0 <= sub.y and sub.y + PATCH_SIDE <= height):
            raise HTTPException(
                status_code=400,
                detail=(
                    f"crop ({sub.x}, {sub.y}) + {PATCH_SIDE}x{PATCH_SIDE} exceeds "
                    f"the {width}x{height} image"
                ),
            )
        name = f"{sub.id}_x{sub.x}_y{sub.y}.png"
        rel = f"{sub.label}/{name}"
        with write_lock:
            for label in LABELS:
                if (patch_dir / label / name).exists():
                    raise HTTPException(
                        status_code=409, detail=f"patch {name!r} already submitted"
                    )
            crop = pixels[sub.y : sub.y + PATCH_SIDE, sub.x : sub.x + PATCH_SIDE]
            target = patch_dir / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            save_patch_png(target, crop)
            row = [rel, sub.label]
            if sub.annotator or sub.timestamp:
                row += [sub.annotator, sub.timestamp]
            with open(manifest_path, "a", newline="") as fh:
                csv.writer(fh).writerow(row)
        return {"patch": rel}

    @app.get("/api/manifest")
    def get_manifest() -> PlainTextResponse:
        text = manifest_path.read_text() if manifest_path.is_file() else ""
        return PlainTextResponse(text, media_type="text/csv")

    @app.delete("/api/patches/{name}")
    def delete_patch(name: str) -> dict:
        if not _ID_PATTERN.match(name):
            raise HTTPException(status_code=404, detail=f"no patch named {name!r}")
        with write_lock:
            rows: list[list[str]] = []
            removed: str | None = None
            if manifest_path.is_file():
                with open(manifest_path, newline="") as fh:
                    for row in csv.reader(fh):
                        if row and Path(row[0]).name == name:
                            removed = row[0]
                        elif row:
                            rows.append(row)
            if removed is None:
                raise HTTPException(status_code=404, detail=f"no patch named {name!r}")
            with open(manifest_path, "w", newline="") as fh:
                csv.writer(fh).writerows(rows)
            target = patch_dir / removed
            if target.is_file():
                target.unlink()
        return {"deleted": removed}

    ui_path = Path(ui_dir) if ui_dir is not None else None
    if ui_path is not None and ui_path.is_dir():
        app.mount("/", StaticFiles(directory=ui_path, html=True), name="ui")
    else:
        @app.get("/", response_class=HTMLResponse)
        def placeholder() -> str:
            return _PLACEHOLDER_PAGE

    return app
