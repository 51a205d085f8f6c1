"""Loading, validation, and premise resolution for the trial corpus.

A corpus is a set of clinical trial records, each with four named sections of
pre-segmented sentences. Claims reference one or two records plus a section,
and resolve to a flat, ordered premise document whose global sentence indices
are what every downstream component (selection, gating, metrics) speaks in.
"""

from __future__ import annotations

import json
import logging
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import (
    DanglingCtrReference,
    DuplicateCtrId,
    EmptySentence,
    MalformedJson,
    MissingSection,
    UnknownSectionName,
)

logger = logging.getLogger(__name__)

SECTION_NAMES = ("eligibility", "intervention", "results", "adverse_events")
LABELS = ("Entailment", "Contradiction")
SHARED_ARM = "shared"
DEFAULT_ARM = "cohort_1"

PRIMARY_PREFIX = "primary trial:"
SECONDARY_PREFIX = "secondary trial:"


def normalize_text(text: str) -> str:
    """NFC-normalize and collapse internal whitespace runs to single spaces."""
    return " ".join(unicodedata.normalize("NFC", text).split())


@dataclass(frozen=True)
class Sentence:
    """One pre-segmented section sentence, tagged with its cohort arm."""

    text: str
    arm: str = SHARED_ARM


@dataclass(frozen=True)
class ClinicalTrialRecord:
    """One trial report: four fixed sections plus 1-2 cohort arm labels."""

    ctr_id: str
    sections: Mapping[str, tuple[Sentence, ...]]
    arms: tuple[str, ...] = (DEFAULT_ARM,)

    def section(self, name: str) -> tuple[Sentence, ...]:
        return self.sections[name]

    def to_json_obj(self) -> dict:
        obj: dict = {
            "ctr_id": self.ctr_id,
            "sections": {name: [s.text for s in self.sections[name]] for name in SECTION_NAMES},
        }
        tags = {
            name: [s.arm for s in self.sections[name]]
            for name in SECTION_NAMES
            if any(s.arm != SHARED_ARM for s in self.sections[name])
        }
        if self.arms != (DEFAULT_ARM,) or tags:
            obj["arms"] = {"labels": list(self.arms)}
            if tags:
                obj["arms"]["tags"] = tags
        return obj


@dataclass(frozen=True)
class ClaimInstance:
    """A claim to verify against one trial (single) or two (comparison)."""

    claim_id: str
    text: str
    section_id: str
    primary_ctr: str
    secondary_ctr: str | None = None
    gold_label: str | None = None
    gold_evidence: Mapping[str, frozenset[int]] | None = None
    challenge: str | None = None

    @property
    def claim_type(self) -> str:
        return "comparison" if self.secondary_ctr is not None else "single"

    @property
    def ctr_ids(self) -> tuple[str, ...]:
        if self.secondary_ctr is not None:
            return (self.primary_ctr, self.secondary_ctr)
        return (self.primary_ctr,)

    @property
    def is_labeled(self) -> bool:
        return self.gold_label is not None

    def to_json_obj(self) -> dict:
        obj: dict = {
            "claim_id": self.claim_id,
            "text": self.text,
            "section_id": self.section_id,
            "primary_ctr": self.primary_ctr,
        }
        if self.secondary_ctr is not None:
            obj["secondary_ctr"] = self.secondary_ctr
        if self.gold_label is not None:
            obj["label"] = self.gold_label
        if self.gold_evidence is not None:
            obj["evidence"] = {ctr: sorted(idx) for ctr, idx in self.gold_evidence.items()}
        if self.challenge is not None:
            obj["challenge"] = self.challenge
        return obj


@dataclass(frozen=True)
class PremiseSentence:
    """One candidate sentence of a resolved premise."""

    global_index: int
    ctr_id: str
    arm: str
    text: str


@dataclass(frozen=True)
class PremiseDoc:
    """The ordered candidate sentences a claim is judged against.

    Global indices are 0-based and contiguous; for comparison claims every
    primary-trial sentence precedes every secondary-trial sentence.
    ``provenance`` maps each global index back to (ctr_id, local index).
    """

    sentences: tuple[PremiseSentence, ...]
    provenance: Mapping[int, tuple[str, int]]

    @property
    def n(self) -> int:
        return len(self.sentences)

    def texts(self) -> list[str]:
        return [s.text for s in self.sentences]

    def to_global(self, ctr_id: str, local_index: int) -> int:
        for g, (cid, loc) in self.provenance.items():
            if cid == ctr_id and loc == local_index:
                return g
        raise KeyError((ctr_id, local_index))

    def to_local(self, global_index: int) -> tuple[str, int]:
        return self.provenance[global_index]


# --- loading -----------------------------------------------------------------


def _read_json(path: Path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedJson(f"{path}: {exc}") from exc


def _parse_arms(obj, ctr_id: str, sections: dict[str, list[str]]):
    """Parse the optional "arms" entry into (labels, per-section tag lists)."""
    if obj is None:
        labels = (DEFAULT_ARM,)
        tags = {name: [SHARED_ARM] * len(sents) for name, sents in sections.items()}
        return labels, tags
    if isinstance(obj, list):
        obj = {"labels": obj}
    if not isinstance(obj, dict) or "labels" not in obj:
        raise MalformedJson(f"{ctr_id}: 'arms' must be a list of labels or an object with 'labels'")
    labels = tuple(str(x) for x in obj["labels"])
    if not 1 <= len(labels) <= 2:
        raise MalformedJson(f"{ctr_id}: cohort count must be 1 or 2, got {len(labels)}")
    if len(set(labels)) != len(labels):
        raise MalformedJson(f"{ctr_id}: duplicate arm labels")
    raw_tags = obj.get("tags", {})
    tags = {}
    for name, sents in sections.items():
        section_tags = [str(t) for t in raw_tags.get(name, [SHARED_ARM] * len(sents))]
        if len(section_tags) != len(sents):
            raise MalformedJson(
                f"{ctr_id}: arm tags for section '{name}' have length "
                f"{len(section_tags)}, expected {len(sents)}"
            )
        for t in section_tags:
            if t != SHARED_ARM and t not in labels:
                raise MalformedJson(f"{ctr_id}: unknown arm tag '{t}' in section '{name}'")
        tags[name] = section_tags
    return labels, tags


def parse_record(obj) -> ClinicalTrialRecord:
    """Build a validated record from one decoded JSON object."""
    if not isinstance(obj, dict):
        raise MalformedJson("trial record must be a JSON object")
    try:
        ctr_id = str(obj["ctr_id"])
        raw_sections = obj["sections"]
    except KeyError as exc:
        raise MalformedJson(f"trial record missing key {exc}") from exc
    if not isinstance(raw_sections, dict):
        raise MalformedJson(f"{ctr_id}: 'sections' must be an object")

    for name in raw_sections:
        if name not in SECTION_NAMES:
            raise UnknownSectionName(f"{ctr_id}: unknown section name '{name}'")
    for name in SECTION_NAMES:
        if name not in raw_sections:
            raise MissingSection(f"{ctr_id}: missing section '{name}'")

    normalized: dict[str, list[str]] = {}
    for name in SECTION_NAMES:
        sents = raw_sections[name]
        if not isinstance(sents, list) or not all(isinstance(s, str) for s in sents):
            raise MalformedJson(f"{ctr_id}: section '{name}' must be a list of strings")
        normalized[name] = [normalize_text(s) for s in sents]
        for i, s in enumerate(normalized[name]):
            if not s:
                raise EmptySentence(f"{ctr_id}: empty sentence at {name}[{i}]")

    labels, tags = _parse_arms(obj.get("arms"), ctr_id, normalized)
    sections = {
        name: tuple(Sentence(text, arm) for text, arm in zip(normalized[name], tags[name]))
        for name in SECTION_NAMES
    }
    return ClinicalTrialRecord(ctr_id=ctr_id, sections=sections, arms=labels)


def load_corpus(path: str | Path) -> dict[str, ClinicalTrialRecord]:
    """Load every trial record from a JSON file or a directory of them.

    A file may hold a single record object or a list of record objects; a
    directory is scanned for ``*.json`` files in sorted order. Duplicate
    record identifiers are an error.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    corpus: dict[str, ClinicalTrialRecord] = {}
    for fp in files:
        data = _read_json(fp)
        objs = data if isinstance(data, list) else [data]
        for obj in objs:
            record = parse_record(obj)
            if record.ctr_id in corpus:
                raise DuplicateCtrId(f"duplicate ctr_id '{record.ctr_id}' in {fp}")
            corpus[record.ctr_id] = record
    return corpus


def parse_claim(obj) -> ClaimInstance:
    """Build a structurally validated claim from one decoded JSON object."""
    if not isinstance(obj, dict):
        raise MalformedJson("claim must be a JSON object")
    try:
        claim_id = str(obj["claim_id"])
        text = normalize_text(str(obj["text"]))
        section_id = str(obj["section_id"])
        primary_ctr = str(obj["primary_ctr"])
    except KeyError as exc:
        raise MalformedJson(f"claim missing key {exc}") from exc
    if section_id not in SECTION_NAMES:
        raise MalformedJson(f"{claim_id}: unknown section_id '{section_id}'")
    if not text:
        raise MalformedJson(f"{claim_id}: empty claim text")

    secondary = obj.get("secondary_ctr")
    secondary_ctr = str(secondary) if secondary is not None else None

    label = obj.get("label")
    if label is not None and label not in LABELS:
        raise MalformedJson(f"{claim_id}: unknown label '{label}'")

    evidence = obj.get("evidence")
    gold_evidence = None
    if evidence is not None:
        if not isinstance(evidence, dict):
            raise MalformedJson(f"{claim_id}: 'evidence' must be an object")
        own_ctrs = {primary_ctr} | ({secondary_ctr} if secondary_ctr else set())
        gold_evidence = {}
        for ctr, idxs in evidence.items():
            if ctr not in own_ctrs:
                raise MalformedJson(
                    f"{claim_id}: evidence references '{ctr}', not one of the claim's trials"
                )
            if not isinstance(idxs, list) or not all(isinstance(i, int) and i >= 0 for i in idxs):
                raise MalformedJson(f"{claim_id}: evidence indices must be non-negative ints")
            gold_evidence[ctr] = frozenset(idxs)

    challenge = obj.get("challenge")
    return ClaimInstance(
        claim_id=claim_id,
        text=text,
        section_id=section_id,
        primary_ctr=primary_ctr,
        secondary_ctr=secondary_ctr,
        gold_label=label,
        gold_evidence=gold_evidence,
        challenge=str(challenge) if challenge is not None else None,
    )


def load_claims(
    path: str | Path,
    split: str | None = None,
    corpus: Mapping[str, ClinicalTrialRecord] | None = None,
    lenient: bool = False,
) -> list[ClaimInstance]:
    """Load one split of claims.

    ``path`` is either the claim file itself or a directory holding
    ``{split}.json``. When ``corpus`` is given, claims whose trial references
    are missing are reported and skipped; unless ``lenient`` is set, any such
    claim raises :class:`DanglingCtrReference` after the whole file is
    scanned, carrying the full list of offenders.
    """
    path = Path(path)
    if path.is_dir():
        if split is None:
            raise ValueError("split is required when path is a directory")
        path = path / f"{split}.json"
    if not path.exists():
        raise FileNotFoundError(path)

    data = _read_json(path)
    if not isinstance(data, list):
        raise MalformedJson(f"{path}: claim file must be a JSON list")
    if not data:
        logger.warning("claim file %s is empty", path)

    claims: list[ClaimInstance] = []
    dangling: list[str] = []
    for obj in data:
        claim = parse_claim(obj)
        if corpus is not None:
            missing = [c for c in claim.ctr_ids if c not in corpus]
            if missing:
                logger.warning(
                    "claim %s references missing trial(s) %s; skipped", claim.claim_id, missing
                )
                dangling.append(claim.claim_id)
                continue
        claims.append(claim)
    if dangling and not lenient:
        raise DanglingCtrReference(
            f"{len(dangling)} claim(s) reference missing trials: {', '.join(dangling)}"
        )
    return claims


# --- premise resolution ------------------------------------------------------


def resolve_premise(
    claim: ClaimInstance,
    corpus: Mapping[str, ClinicalTrialRecord],
    inject_arm_prefix: bool = False,
) -> PremiseDoc:
    """Resolve a claim to its ordered candidate-sentence list.

    Only the claim's own section contributes. Comparison claims concatenate
    the primary trial's sentences first, then the secondary trial's, with
    global indices running contiguously across the boundary. With
    ``inject_arm_prefix`` set, comparison-claim sentences get a textual
    "primary trial:" / "secondary trial:" role marker so an encoder can tell
    the two trials apart.
    """
    sentences: list[PremiseSentence] = []
    provenance: dict[int, tuple[str, int]] = {}
    roles = [(claim.primary_ctr, PRIMARY_PREFIX)]
    if claim.secondary_ctr is not None:
        roles.append((claim.secondary_ctr, SECONDARY_PREFIX))
    g = 0
    for ctr_id, prefix in roles:
        if ctr_id not in corpus:
            raise DanglingCtrReference(f"claim {claim.claim_id}: missing trial '{ctr_id}'")
        record = corpus[ctr_id]
        for local, sent in enumerate(record.section(claim.section_id)):
            text = sent.text
            if inject_arm_prefix and claim.claim_type == "comparison":
                text = f"{prefix} {text}"
            sentences.append(PremiseSentence(g, ctr_id, sent.arm, text))
            provenance[g] = (ctr_id, local)
            g += 1
    return PremiseDoc(sentences=tuple(sentences), provenance=provenance)


def gold_evidence_globals(claim: ClaimInstance, premise: PremiseDoc) -> frozenset[int]:
    """Map a claim's per-trial gold evidence indices onto the premise's global indices."""
    if claim.gold_evidence is None:
        return frozenset()
    out = set()
    for ctr_id, locals_ in claim.gold_evidence.items():
        for loc in locals_:
            out.add(premise.to_global(ctr_id, loc))
    return frozenset(out)


# --- whole-dataset validation -------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str
    claim_id: str | None = None
    ctr_id: str | None = None


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json_obj(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [
                {k: v for k, v in vars(viol).items() if v is not None}
                for viol in self.violations
            ],
        }

    def render(self) -> str:
        if self.ok:
            return "dataset valid: 0 violations"
        lines = [f"dataset invalid: {len(self.violations)} violation(s)"]
        for v in self.violations:
            who = v.claim_id or v.ctr_id or "-"
            lines.append(f"  {v.code} [{who}] {v.detail}")
        return "\n".join(lines)


def validate_dataset(
    corpus: Mapping[str, ClinicalTrialRecord], claims: Iterable[ClaimInstance]
) -> ValidationReport:
    """Re-check every record and claim invariant, reporting instead of raising.

    Loading already enforces these, so a freshly loaded dataset is clean; the
    report exists to audit records and claims constructed or mutated in
    memory, and to surface cross-reference problems in one pass.
    """
    report = ValidationReport()

    for ctr_id, record in corpus.items():
        for name in SECTION_NAMES:
            if name not in record.sections:
                report.violations.append(
                    Violation("MissingSection", f"missing section '{name}'", ctr_id=ctr_id)
                )
        for name in record.sections:
            if name not in SECTION_NAMES:
                report.violations.append(
                    Violation("UnknownSectionName", f"unknown section '{name}'", ctr_id=ctr_id)
                )
                continue
            for i, sent in enumerate(record.sections[name]):
                if not normalize_text(sent.text):
                    report.violations.append(
                        Violation("EmptySentence", f"{name}[{i}] is empty", ctr_id=ctr_id)
                    )
                if sent.arm != SHARED_ARM and sent.arm not in record.arms:
                    report.violations.append(
                        Violation("UnknownArmTag", f"{name}[{i}] arm '{sent.arm}'", ctr_id=ctr_id)
                    )
        if not 1 <= len(record.arms) <= 2:
            report.violations.append(
                Violation("BadCohortCount", f"{len(record.arms)} arm labels", ctr_id=ctr_id)
            )

    for claim in claims:
        has_secondary = claim.secondary_ctr is not None
        if (claim.claim_type == "comparison") != has_secondary:
            report.violations.append(
                Violation("InconsistentClaimType", "claim_type vs secondary_ctr", claim.claim_id)
            )
        if claim.section_id not in SECTION_NAMES:
            report.violations.append(
                Violation("UnknownSectionName", f"section '{claim.section_id}'", claim.claim_id)
            )
            continue
        missing = [c for c in claim.ctr_ids if c not in corpus]
        for ctr in missing:
            report.violations.append(
                Violation("DanglingCtrReference", f"missing trial '{ctr}'", claim.claim_id)
            )
        if claim.gold_label is not None and claim.gold_label not in LABELS:
            report.violations.append(
                Violation("UnknownLabel", f"label '{claim.gold_label}'", claim.claim_id)
            )
        if claim.gold_evidence is not None:
            for ctr, idxs in claim.gold_evidence.items():
                if ctr not in claim.ctr_ids:
                    report.violations.append(
                        Violation("EvidenceCtrMismatch", f"evidence for '{ctr}'", claim.claim_id)
                    )
                    continue
                if ctr not in corpus:
                    continue  # already reported as dangling
                n = len(corpus[ctr].section(claim.section_id))
                for i in idxs:
                    if not 0 <= i < n:
                        report.violations.append(
                            Violation(
                                "EvidenceIndexOutOfRange",
                                f"index {i} outside {claim.section_id} of '{ctr}' (n={n})",
                                claim.claim_id,
                            )
                        )
    return report


# --- serialization helpers ----------------------------------------------------


def dump_corpus(corpus: Mapping[str, ClinicalTrialRecord], path: str | Path) -> None:
    """Write a corpus back to one JSON file (sorted by ctr_id)."""
    records = [corpus[cid].to_json_obj() for cid in sorted(corpus)]
    Path(path).write_text(json.dumps(records, indent=2, sort_keys=True), encoding="utf-8")


def dump_claims(claims: Iterable[ClaimInstance], path: str | Path) -> None:
    """Write claims to one JSON file, preserving order."""
    objs = [c.to_json_obj() for c in claims]
    Path(path).write_text(json.dumps(objs, indent=2, sort_keys=True), encoding="utf-8")
