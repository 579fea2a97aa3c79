"""Document and segment data model plus corpus loading.

A corpus is a directory of .md/.txt files, one document each. An optional
``<name>.meta.json`` sidecar per document supplies the title and image
descriptions; without a sidecar the title defaults to the filename stem.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)

DOCUMENT_SUFFIXES = (".md", ".txt")

SEGMENT_KINDS = ("text", "table", "image")


class CorpusError(Exception):
    """A corpus directory or one of its files cannot be loaded."""


def segment_key(doc_id: str, segment_id: str) -> str:
    """Globally unique key for a segment, used by all indices."""
    return f"{doc_id}#{segment_id}"


@dataclass
class ImageAsset:
    """An image belonging to a document, identified by file reference."""

    image_id: str
    file_ref: str
    description: str = ""


@dataclass
class Segment:
    """One chapter-level knowledge unit of a document.

    ``embedding_text`` and ``metadata_path`` stay empty until the hierarchy
    augmentation pass fills them; ``content`` always keeps the full original
    section body.
    """

    segment_id: str
    chapter_number: str  # dotted numeric string; "" for the preamble
    level: int  # number of dotted components; 0 for the preamble
    title: str
    kind: str  # one of SEGMENT_KINDS
    content: str
    doc_id: str = ""  # stamped when attached to a DocumentRecord
    embedding_text: str = ""
    metadata_path: list[str] = field(default_factory=list)

    @property
    def key(self) -> str:
        return segment_key(self.doc_id, self.segment_id)


@dataclass
class DocumentRecord:
    """A single source document with its parsed segments and images."""

    doc_id: str
    title: str
    source_path: str
    text: str = ""
    segments: list[Segment] = field(default_factory=list)
    images: list[ImageAsset] = field(default_factory=list)

    def attach_segments(self, segments: list[Segment]) -> None:
        """Adopt parsed segments, stamping each with this document's id."""
        for seg in segments:
            seg.doc_id = self.doc_id
        self.segments = list(segments)


def _read_sidecar(path: Path) -> dict:
    sidecar = path.with_name(path.stem + ".meta.json")
    if not sidecar.exists():
        return {}
    try:
        data = json.loads(sidecar.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise CorpusError(f"unreadable sidecar {sidecar}: {exc}") from exc
    if not isinstance(data, dict):
        raise CorpusError(f"sidecar {sidecar} must hold a JSON object")
    return data


def _images_from_sidecar(meta: dict, path: Path) -> list[ImageAsset]:
    assets = []
    for i, entry in enumerate(meta.get("images", [])):
        if not isinstance(entry, dict):
            raise CorpusError(f"sidecar for {path}: images[{i}] must be an object")
        assets.append(
            ImageAsset(
                image_id=str(entry.get("id", f"img{i}")),
                file_ref=str(entry.get("file", "")),
                description=str(entry.get("description", "")),
            )
        )
    return assets


def load_corpus(root_dir: str | Path, manifest: str | Path | None = None) -> list[DocumentRecord]:
    """Load every document file under ``root_dir``, ordered by path.

    ``manifest`` optionally names a JSON array of root-relative paths; only
    those files are loaded (ordering stays by path). One record per file;
    doc_id is the filename stem and must be unique across the corpus.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise CorpusError(f"corpus directory not found: {root}")

    paths = sorted(
        (p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in DOCUMENT_SUFFIXES),
        key=lambda p: p.relative_to(root).as_posix(),
    )
    if manifest is not None:
        try:
            wanted = json.loads(Path(manifest).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise CorpusError(f"unreadable manifest {manifest}: {exc}") from exc
        if not isinstance(wanted, list):
            raise CorpusError(f"manifest {manifest} must hold a JSON array of paths")
        allowed = {str(entry) for entry in wanted}
        paths = [p for p in paths if p.relative_to(root).as_posix() in allowed]

    records: list[DocumentRecord] = []
    seen_ids: dict[str, Path] = {}
    for path in paths:
        doc_id = path.stem
        if doc_id in seen_ids:
            raise CorpusError(
                f"duplicate doc_id {doc_id!r}: {seen_ids[doc_id]} and {path}"
            )
        seen_ids[doc_id] = path
        try:
            text = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise CorpusError(f"unreadable document {path}: {exc}") from exc
        meta = _read_sidecar(path)
        records.append(
            DocumentRecord(
                doc_id=doc_id,
                title=str(meta.get("title") or path.stem),
                source_path=str(path),
                text=text,
                images=_images_from_sidecar(meta, path),
            )
        )
    return records
