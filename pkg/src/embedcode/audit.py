"""Semantic-consistency audit: near-identical responses carrying different codes.

The sweep is exact O(N^2) over all response pairs (blocked, no approximate
index), flags every response with at least one differently-coded neighbor at
cosine distance <= threshold (inclusive boundary), and groups conflicts into
connected components for review. Resolutions are applied atomically and kept
as an immutable history; the engine never rewrites codes on its own.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import vecmath
from .corpus import Project, check_revision
from .errors import ValidationError


@dataclass(frozen=True)
class AuditFlag:
    response_id: str
    code: str
    neighbors: list[tuple[str, str, float]]  # (other id, other code, distance)

    def to_json(self) -> dict:
        return {
            "response_id": self.response_id,
            "code": self.code,
            "neighbors": [
                {"response_id": rid, "code": code, "distance": dist}
                for rid, code, dist in self.neighbors
            ],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "AuditFlag":
        return cls(
            response_id=doc["response_id"],
            code=doc["code"],
            neighbors=[
                (n["response_id"], n["code"], float(n["distance"]))
                for n in doc.get("neighbors", [])
            ],
        )


@dataclass(frozen=True)
class AuditReport:
    project_id: str
    threshold: float
    model_id: str
    code_source: str  # "human" or "predicted"
    flags: list[AuditFlag]
    conflict_components: list[list[str]]
    created_at_revision: int

    def flagged_ids(self) -> set[str]:
        return {f.response_id for f in self.flags}

    def to_json(self) -> dict:
        return {
            "project_id": self.project_id,
            "threshold": self.threshold,
            "model_id": self.model_id,
            "code_source": self.code_source,
            "created_at_revision": self.created_at_revision,
            "flag_count": len(self.flags),
            "flags": [f.to_json() for f in self.flags],
            "conflict_components": [list(c) for c in self.conflict_components],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "AuditReport":
        return cls(
            project_id=doc["project_id"],
            threshold=float(doc["threshold"]),
            model_id=doc["model_id"],
            code_source=doc["code_source"],
            flags=[AuditFlag.from_json(f) for f in doc.get("flags", [])],
            conflict_components=[list(c) for c in doc.get("conflict_components", [])],
            created_at_revision=int(doc.get("created_at_revision", 0)),
        )


@dataclass(frozen=True)
class Resolution:
    response_id: str
    old_code: str | None
    new_code: str
    resolver: str = ""
    note: str = ""

    @property
    def confirmed(self) -> bool:
        return self.new_code == self.old_code

    def to_json(self) -> dict:
        return {
            "response_id": self.response_id,
            "old_code": self.old_code,
            "new_code": self.new_code,
            "resolver": self.resolver,
            "note": self.note,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "Resolution":
        return cls(
            response_id=doc["response_id"],
            old_code=doc.get("old_code"),
            new_code=doc["new_code"],
            resolver=doc.get("resolver", ""),
            note=doc.get("note", ""),
        )


def report_json(report: AuditReport) -> str:
    """Canonical serialization shared by the CLI and the HTTP service."""
    return json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n"


class _UnionFind:
    def __init__(self, items: Iterable[str]):
        self.parent = {x: x for x in items}

    def find(self, x: str) -> str:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:  # path compression
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def _codes_for(project: Project, code_source: str) -> dict[str, str]:
    codes: dict[str, str] = {}
    missing: list[str] = []
    for r in project.responses:
        if code_source == "human":
            code = r.human_code
        elif code_source == "predicted":
            a = project.assignments.get(r.id)
            code = a.category_id if a is not None else None
        else:
            raise ValidationError(
                f"unknown code_source {code_source!r} (expected human or predicted)"
            )
        if code is None:
            missing.append(r.id)
        else:
            codes[r.id] = code
    if missing:
        raise ValidationError(
            f"{len(missing)} responses have no {code_source} code: {missing[:20]}"
        )
    return codes


def run_audit(
    project: Project,
    embedded,
    threshold: float = 0.15,
    code_source: str = "human",
    block_size: int = 256,
) -> AuditReport:
    """Pairwise sweep flagging responses with a differently-coded neighbor at
    distance <= threshold; conflict components come from union-find over the
    conflicting pairs. Output ordering is deterministic (by response id)."""
    if not (0.0 < threshold < 2.0):
        raise ValidationError(f"threshold must lie in (0, 2), got {threshold}")
    codes = _codes_for(project, code_source)
    ids = [r.id for r in project.responses]
    vector_of = embedded.as_mapping()
    missing = [rid for rid in ids if rid not in vector_of]
    if missing:
        raise ValidationError(f"responses without embeddings: {missing[:20]}")

    conflicts: dict[str, list[tuple[str, str, float]]] = {}
    edges: list[tuple[str, str]] = []
    if ids:
        matrix = np.stack([vector_of[rid] for rid in ids])
        for i, j, dist in vecmath.near_pairs(matrix, threshold, block_size=block_size):
            a, b = ids[i], ids[j]
            if codes[a] != codes[b]:
                conflicts.setdefault(a, []).append((b, codes[b], dist))
                conflicts.setdefault(b, []).append((a, codes[a], dist))
                edges.append((a, b))

    flags = [
        AuditFlag(
            response_id=rid,
            code=codes[rid],
            neighbors=sorted(conflicts[rid], key=lambda n: n[0]),
        )
        for rid in sorted(conflicts)
    ]

    uf = _UnionFind(conflicts.keys())
    for a, b in edges:
        uf.union(a, b)
    groups: dict[str, list[str]] = {}
    for rid in conflicts:
        groups.setdefault(uf.find(rid), []).append(rid)
    components = sorted((sorted(members) for members in groups.values()), key=lambda c: c[0])

    return AuditReport(
        project_id=project.id,
        threshold=threshold,
        model_id=embedded.model_id,
        code_source=code_source,
        flags=flags,
        conflict_components=components,
        created_at_revision=project.revision,
    )


def apply_resolutions(
    project: Project,
    resolutions: Sequence[Resolution],
    expected_revision: int | None = None,
) -> Project:
    """Apply reviewer decisions: validate everything, then update codes in one
    step, append to the immutable resolution log, and bump the revision once."""
    check_revision(project, expected_revision)
    codebook = project.require_codebook()
    index = project.response_index()
    known = set(codebook.category_ids)
    for res in resolutions:
        if res.response_id not in index:
            raise ValidationError(f"resolution references unknown response {res.response_id!r}")
        if res.new_code not in known:
            raise ValidationError(
                f"resolution for {res.response_id!r} names unknown category {res.new_code!r}"
            )
    for res in resolutions:
        index[res.response_id].human_code = res.new_code
    project.resolutions.extend(resolutions)
    project.bump()
    return project


@dataclass(frozen=True)
class AuditSummary:
    flagged: int
    resolved: int
    reclassified: int
    outstanding: int

    def to_json(self) -> dict:
        return {
            "flagged": self.flagged,
            "resolved": self.resolved,
            "reclassified": self.reclassified,
            "outstanding": self.outstanding,
        }


def audit_summary(
    project: Project,
    report: AuditReport,
    resolutions: Sequence[Resolution],
) -> AuditSummary:
    """Progress counters over a report given the resolutions recorded so far.

    A conflict edge is cleared when the resolutions give both endpoints equal
    codes, or when both endpoints have been explicitly reviewed (confirmed or
    reclassified). A flag is resolved when all its edges are cleared.
    """
    if report.project_id != project.id:
        raise ValidationError(
            f"audit report belongs to project {report.project_id!r}, not {project.id!r}"
        )
    known = {r.id for r in project.responses}
    stray = [res.response_id for res in resolutions if res.response_id not in known]
    if stray:
        raise ValidationError(f"resolutions reference foreign responses: {stray[:20]}")

    effective = {f.response_id: f.code for f in report.flags}
    reviewed: set[str] = set()
    for res in resolutions:
        reviewed.add(res.response_id)
        effective[res.response_id] = res.new_code

    resolved = 0
    for flag in report.flags:
        rid = flag.response_id
        cleared = all(
            effective.get(rid) == effective.get(other, other_code)
            or (rid in reviewed and other in reviewed)
            for other, other_code, _ in flag.neighbors
        )
        if cleared:
            resolved += 1

    reclassified = sum(1 for res in resolutions if not res.confirmed)
    return AuditSummary(
        flagged=len(report.flags),
        resolved=resolved,
        reclassified=reclassified,
        outstanding=len(report.flags) - resolved,
    )


def audit_csv(project: Project, report: AuditReport) -> str:
    """Reviewer-facing export: one row per flag with its closest conflicting
    neighbor spelled out."""
    texts = {r.id: r.text for r in project.responses}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["response_id", "text", "code", "neighbor_id", "neighbor_text", "neighbor_code", "distance"]
    )
    for flag in report.flags:
        worst = min(flag.neighbors, key=lambda n: (n[2], n[0]))
        writer.writerow(
            [
                flag.response_id,
                texts.get(flag.response_id, ""),
                flag.code,
                worst[0],
                texts.get(worst[0], ""),
                worst[1],
                f"{worst[2]:.10g}",
            ]
        )
    return buf.getvalue()


def resolutions_from_csv(project: Project, text: str) -> list[Resolution]:
    """Parse reviewer decisions (columns response_id, new_code, optional
    resolver and note); old_code is taken from the project's current state."""
    index = project.response_index()
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or "response_id" not in reader.fieldnames:
        raise ValidationError("resolutions CSV requires a header with response_id and new_code")
    out: list[Resolution] = []
    for row in reader:
        rid = row["response_id"]
        if rid not in index:
            raise ValidationError(f"resolution references unknown response {rid!r}")
        out.append(
            Resolution(
                response_id=rid,
                old_code=index[rid].human_code,
                new_code=row["new_code"],
                resolver=row.get("resolver", "") or "",
                note=row.get("note", "") or "",
            )
        )
    return out
