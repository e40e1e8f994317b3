"""Local HTTP service backing the annotator UI.

Sessions are in-memory: one uploaded image, a cached edge map keyed by its
config, the current ROI polygon and pupil annotation, and the masks derived
from them. All pixel work is delegated to the pipeline module, which the CLI
shares; identical inputs therefore produce byte-identical mask PNGs and
equal measurement JSON through either entry point.

Mutations on one session are serialized by a per-session lock; different
sessions never interact.
"""

from __future__ import annotations

import io
import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI, File, HTTPException, UploadFile
from fastapi.responses import JSONResponse, Response
from PIL import Image

from . import __version__
from .errors import TmhkitError
from .pipeline import (
    EdgeConfig,
    PupilAnnotation,
    compute_edge_map,
    threshold_band,
)
from .quality import assess
from .raster import (
    BinaryMask,
    PngFormatError,
    RasterImage,
    load_png,
    mask_png_bytes,
    png_bytes_to_image,
    save_mask,
    save_png,
    to_display,
)
from .repair import Polygon, RepairConfig, merge_masks, repair_band
from .tmh import measure


@dataclass
class Session:
    id: str
    image: RasterImage
    edge_cfg: EdgeConfig = field(default_factory=EdgeConfig)
    edge_map: Optional[RasterImage] = None
    roi: Optional[Polygon] = None
    pupil: Optional[PupilAnnotation] = None
    band_raw: Optional[BinaryMask] = None  # thresholded, pre-repair
    band: Optional[BinaryMask] = None
    combined: Optional[BinaryMask] = None
    repair_history: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def edge(self, cfg: Optional[EdgeConfig] = None) -> RasterImage:
        """Cached edge map; recomputed only when the config changes."""
        cfg = cfg or self.edge_cfg
        if self.edge_map is None or cfg != self.edge_cfg:
            self.edge_map = compute_edge_map(self.image, cfg)
            self.edge_cfg = cfg
            # masks derived from a stale edge map are dropped with it
            self.band_raw = self.band = self.combined = None
            if self.roi is not None:
                self.band_raw = self.band = threshold_band(self.edge_map, self.roi)
                self._merge()
        return self.edge_map

    def set_roi(self, roi: Polygon) -> None:
        self.band_raw = self.band = threshold_band(self.edge(), roi)
        self.roi = roi
        self._merge()

    def set_pupil(self, pupil: PupilAnnotation) -> None:
        # validate eagerly so a bad annotation cannot linger in the session
        pupil.to_mask(self.image.height, self.image.width)
        self.pupil = pupil
        self._merge()

    def apply_repair(self, cfg: RepairConfig, to_fixpoint: bool = False) -> BinaryMask:
        if self.band_raw is None:
            raise HTTPException(status_code=409, detail="no ROI committed yet")
        self.band = repair_band(self.band_raw, cfg, to_fixpoint=to_fixpoint)
        self.repair_history.append(cfg)
        self._merge()
        return self.combined

    def _merge(self) -> None:
        if self.band is None:
            self.combined = None
            return
        if self.pupil is None:
            self.combined = self.band
        else:
            pupil_mask = self.pupil.to_mask(self.image.height, self.image.width)
            self.combined = merge_masks(self.band, pupil_mask)

    def save(self, out_dir) -> Path:
        """Optional persistence: PNGs plus a JSON state file."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_png(self.image, out / "image.png")
        if self.combined is not None:
            save_mask(self.combined, out / "combined.png")
        state = {
            "id": self.id,
            "version": __version__,
            "edge_cfg": self.edge_cfg.__dict__,
            "roi": [[x, y] for x, y in self.roi.vertices] if self.roi else None,
            "pupil": None,
            "repair_history": [cfg.__dict__ for cfg in self.repair_history],
        }
        if self.pupil is not None:
            if self.pupil.polygon is not None:
                state["pupil"] = {"vertices": [[x, y] for x, y in self.pupil.polygon.vertices]}
            else:
                state["pupil"] = {"point": list(self.pupil.point), "radius": self.pupil.radius}
        (out / "session.json").write_text(json.dumps(state, indent=2))
        return out

    @classmethod
    def load(cls, in_dir) -> "Session":
        src = Path(in_dir)
        state = json.loads((src / "session.json").read_text())
        s = cls(id=state["id"], image=load_png(src / "image.png"))
        s.edge_cfg = EdgeConfig(**state["edge_cfg"])
        if state.get("roi"):
            s.set_roi(Polygon(state["roi"]))
        if state.get("pupil"):
            s.set_pupil(PupilAnnotation.from_json(json.dumps(state["pupil"])))
        for cfg in state.get("repair_history", []):
            s.apply_repair(RepairConfig(**cfg))
        return s


class SessionStore:
    def __init__(self):
        self._sessions = {}
        self._lock = threading.Lock()

    def create(self, image: RasterImage) -> Session:
        s = Session(id=uuid.uuid4().hex, image=image)
        with self._lock:
            self._sessions[s.id] = s
        return s

    def get(self, session_id: str) -> Session:
        with self._lock:
            s = self._sessions.get(session_id)
        if s is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return s


def _edge_config_from_query(k1, k2, center_offset, padding) -> EdgeConfig:
    try:
        return EdgeConfig(int(k1), int(k2), int(center_offset), padding)
    except (TypeError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))


def create_app(ui_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="tmh annotation service", version=__version__)
    store = SessionStore()
    app.state.store = store

    @app.exception_handler(TmhkitError)
    def pipeline_error(_, exc: TmhkitError):
        return JSONResponse(
            status_code=422,
            content={"detail": f"{type(exc).__name__}: {exc}", "version": __version__},
        )

    @app.exception_handler(ValueError)
    def value_error(_, exc: ValueError):
        return JSONResponse(
            status_code=422, content={"detail": str(exc), "version": __version__}
        )

    @app.post("/sessions")
    def create_session(image: UploadFile = File(...)):
        data = image.file.read()
        try:
            img = png_bytes_to_image(data)
        except PngFormatError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        s = store.create(img)
        quality = assess(img)
        return {
            "id": s.id,
            "width": img.width,
            "height": img.height,
            "quality": quality.to_dict(),
            "version": __version__,
        }

    @app.get("/sessions/{session_id}/edge-map")
    def edge_map(
        session_id: str,
        k1: int = 13,
        k2: int = 7,
        center_offset: int = 5,
        padding: str = "reflect",
    ):
        s = store.get(session_id)
        cfg = _edge_config_from_query(k1, k2, center_offset, padding)
        with s.lock:
            edge = s.edge(cfg)
            buf = io.BytesIO()
            Image.fromarray(to_display(edge).data).save(buf, format="PNG")
            png = buf.getvalue()
        return Response(content=png, media_type="image/png")

    @app.put("/sessions/{session_id}/roi")
    def put_roi(session_id: str, body: dict = Body(...)):
        s = store.get(session_id)
        if "vertices" not in body:
            raise HTTPException(status_code=422, detail="polygon JSON needs 'vertices'")
        poly = Polygon(body["vertices"])
        with s.lock:
            s.set_roi(poly)
            fg = s.band.count()
        return {"id": s.id, "band_px": fg, "version": __version__}

    @app.put("/sessions/{session_id}/pupil")
    def put_pupil(session_id: str, body: dict = Body(...)):
        s = store.get(session_id)
        pupil = PupilAnnotation.from_json(json.dumps(body))
        with s.lock:
            s.set_pupil(pupil)
        return {"id": s.id, "version": __version__}

    @app.post("/sessions/{session_id}/repair")
    def post_repair(session_id: str, body: dict = Body(default={})):
        s = store.get(session_id)
        try:
            cfg = RepairConfig(
                k_neighbors=int(body.get("k_neighbors", 8)),
                max_link_distance=float(body.get("max_link_distance", 15.0)),
                stroke_width=int(body.get("stroke_width", 1)),
            )
        except (TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        to_fixpoint = bool(body.get("to_fixpoint", False))
        with s.lock:
            before = s.band_raw.count() if s.band_raw is not None else 0
            combined = s.apply_repair(cfg, to_fixpoint=to_fixpoint)
            stats = {
                "foreground": combined.count(),
                "band_px": s.band.count(),
                "added": s.band.count() - before,
                "version": __version__,
            }
            png = mask_png_bytes(combined)
        return Response(
            content=png,
            media_type="image/png",
            headers={"X-Mask-Stats": json.dumps(stats)},
        )

    @app.post("/sessions/{session_id}/measure")
    def post_measure(session_id: str, body: dict = Body(default={})):
        s = store.get(session_id)
        method = int(body.get("method", 1))
        section_mm = float(body.get("section_mm", 0.5))
        with s.lock:
            if s.combined is None:
                raise HTTPException(status_code=409, detail="no mask yet: commit an ROI first")
            result = measure(s.combined, method=method, section_mm=section_mm)
        return result.to_dict()

    @app.get("/sessions/{session_id}/mask")
    def get_mask(session_id: str):
        s = store.get(session_id)
        with s.lock:
            if s.combined is None:
                raise HTTPException(status_code=409, detail="no mask yet: commit an ROI first")
            png = mask_png_bytes(s.combined)
        return Response(content=png, media_type="image/png")

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
