"""On-disk store: versioned knowledge graphs, KB files, and video assets.

Graphs are immutable snapshots; a new version is written beside the old ones
and the CURRENT pointer swaps atomically, so concurrent readers never see a
half-written graph.  Re-putting identical content returns the existing
version instead of minting a new one.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path
from typing import Callable, Optional

from .graph import KnowledgeGraph, graph_to_document, load_graph
from .windows import ImageBuffer, ImageHandle


class StoreError(ValueError):
    pass


class GraphStore:
    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.graphs_dir = self.root / "graphs"
        self.kb_dir = self.root / "kb"
        self.videos_index = self.root / "videos.json"
        self.virtual_registry = self.root / "virtual.txt"
        self.classifier_registry = self.root / "classifiers.txt"
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    # --- graphs ------------------------------------------------------------

    def _video_dir(self, video_id: str) -> Path:
        return self.graphs_dir / video_id

    def _version_path(self, video_id: str, version: int) -> Path:
        return self._video_dir(video_id) / f"v{version:04d}.json"

    def latest_version(self, video_id: str) -> Optional[int]:
        current = self._video_dir(video_id) / "CURRENT"
        if not current.exists():
            return None
        return int(current.read_text().strip())

    def put(self, graph: KnowledgeGraph) -> int:
        """Write a new graph version; identical content keeps the old version."""
        with self._lock:
            current = self.latest_version(graph.video_id)
            payload = json.dumps(graph_to_document(graph), indent=2, ensure_ascii=False) + "\n"
            if current is not None:
                existing = self._version_path(graph.video_id, current)
                if existing.exists() and existing.read_text(encoding="utf-8") == payload:
                    return current
            version = 1 if current is None else current + 1
            path = self._version_path(graph.video_id, version)
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".json.tmp")
            tmp.write_text(payload, encoding="utf-8")
            os.replace(tmp, path)
            pointer = self._video_dir(graph.video_id) / "CURRENT"
            tmp_pointer = pointer.with_suffix(".tmp")
            tmp_pointer.write_text(str(version), encoding="utf-8")
            os.replace(tmp_pointer, pointer)
            return version

    def load(self, video_id: str, version: Optional[int] = None) -> KnowledgeGraph:
        version = version if version is not None else self.latest_version(video_id)
        if version is None:
            raise StoreError(f"no graph stored for video {video_id!r}")
        path = self._version_path(video_id, version)
        if not path.exists():
            raise StoreError(f"no graph version {version} for video {video_id!r}")
        return load_graph(path)

    def video_ids(self) -> list[str]:
        if not self.graphs_dir.exists():
            return []
        return sorted(
            p.name for p in self.graphs_dir.iterdir() if (p / "CURRENT").exists()
        )

    def snapshot(self) -> dict[str, KnowledgeGraph]:
        """Consistent read of every video's current graph."""
        return {vid: self.load(vid) for vid in self.video_ids()}

    # --- KB files -----------------------------------------------------------

    def kb_path(self, video_id: str) -> Path:
        return self.kb_dir / f"{video_id}.json"

    # --- video asset index ----------------------------------------------------

    def register_video(self, video_id: str, frames_dir: Path | str, fps: float) -> None:
        with self._lock:
            index = self._read_index()
            index[video_id] = {"frames_dir": str(frames_dir), "fps": fps}
            tmp = self.videos_index.with_suffix(".tmp")
            tmp.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            os.replace(tmp, self.videos_index)

    def _read_index(self) -> dict:
        if not self.videos_index.exists():
            return {}
        return json.loads(self.videos_index.read_text(encoding="utf-8"))

    def video_info(self, video_id: str) -> Optional[dict]:
        return self._read_index().get(video_id)

    def frame_path(self, video_id: str, frame_index: int) -> Path:
        info = self.video_info(video_id)
        if info is None:
            raise StoreError(f"video {video_id!r} not registered")
        return Path(info["frames_dir"]) / f"{frame_index:06d}.png"

    def frame_image(self, video_id: str, frame_index: int) -> ImageBuffer:
        path = self.frame_path(video_id, frame_index)
        if not path.exists():
            raise StoreError(f"frame image missing: {path}")
        return ImageHandle(path).load()


FrameSource = Callable[[str, int], ImageBuffer]
