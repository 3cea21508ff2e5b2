"""Flat key-value scenario files and their resolution into a typed config."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ScenarioError
from .strategies import StrategyKind

_BOOL_TRUE = ("1", "true", "yes", "on")
_BOOL_FALSE = ("0", "false", "no", "off")

_KNOWN_KEYS = {
    "relationships",
    "attributes",
    "matrix",
    "profiles",
    "total_units",
    "strategy",
    "resistor_members",
    "resistor_country",
    "resistor_top_degree_fraction",
    "frrp",
    "selarp",
    "selarp_objective",
    "deployment_mode",
    "deployment_size",
    "deployers",
    "ring_country",
    "defection",
    "alpha",
    "psi",
    "usd_ratio",
    "convergence_cap",
    "threads",
    "export_ribs",
    "merge_siblings",
}


def parse_key_values(text: str) -> dict[str, str]:
    """One ``key = value`` pair per line; ``#`` comments; no nesting."""
    out: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ScenarioError(f"line {line_no}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise ScenarioError(f"line {line_no}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _parse_bool(key: str, value: str) -> bool:
    low = value.lower()
    if low in _BOOL_TRUE:
        return True
    if low in _BOOL_FALSE:
        return False
    raise ScenarioError(f"{key}: expected a boolean, got {value!r}")


def _parse_asn_list(value: str) -> frozenset[int]:
    try:
        return frozenset(int(x) for x in value.replace(",", " ").split() if x)
    except ValueError:
        raise ScenarioError(f"expected ASN list, got {value!r}") from None


@dataclass(frozen=True)
class ScenarioConfig:
    """A fully resolved scenario: raw input texts plus typed options."""

    relationships_text: str
    attributes_text: str | None
    matrix_text: str | None
    profiles_text: str | None
    total_units: float | None
    strategy: StrategyKind
    resistor_members: frozenset[int] | None
    resistor_country: str | None
    resistor_top_degree_fraction: float | None
    frrp: bool
    selarp: bool
    selarp_objective: str
    deployment_mode: str  # targeted / global / ring / explicit
    deployment_size: int | None
    explicit_deployers: frozenset[int] | None
    ring_country: str | None
    defection: bool
    alpha: float | None
    psi: float | None
    usd_ratio: str
    convergence_cap: int | None
    threads: int
    export_ribs: bool
    merge_siblings: bool
    raw: dict[str, str] = field(default_factory=dict)

    def scenario_hash(self) -> str:
        digest = hashlib.sha256()
        for key in sorted(self.raw):
            digest.update(f"{key}={self.raw[key]}\n".encode())
        for text in (
            self.relationships_text,
            self.attributes_text or "",
            self.matrix_text or "",
            self.profiles_text or "",
        ):
            digest.update(b"\x00")
            digest.update(text.encode())
        return digest.hexdigest()

    def resolved_text(self) -> str:
        lines = [f"{key} = {self.raw[key]}" for key in sorted(self.raw)]
        return "\n".join(lines) + "\n"


def load_scenario(
    path: str | Path, overrides: dict[str, str] | None = None
) -> ScenarioConfig:
    path = Path(path)
    try:
        pairs = parse_key_values(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc}") from exc
    if overrides:
        pairs.update(overrides)
    return resolve_scenario(pairs, base_dir=path.parent)


def resolve_scenario(pairs: dict[str, str], base_dir: Path) -> ScenarioConfig:
    unknown = set(pairs) - _KNOWN_KEYS
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")

    def read_file(key: str, required: bool = False) -> str | None:
        value = pairs.get(key)
        if value is None:
            if required:
                raise ScenarioError(f"scenario is missing required key {key!r}")
            return None
        file_path = base_dir / value
        try:
            return file_path.read_text()
        except OSError as exc:
            raise ScenarioError(f"{key}: cannot read {file_path}: {exc}") from exc

    relationships = read_file("relationships", required=True)
    attributes = read_file("attributes")
    matrix = read_file("matrix")
    profiles = read_file("profiles")
    if matrix is not None and profiles is not None:
        raise ScenarioError("matrix and profiles are mutually exclusive")
    if matrix is None and profiles is None:
        raise ScenarioError("one of matrix or profiles is required")
    total_units = float(pairs["total_units"]) if "total_units" in pairs else None
    if profiles is not None and total_units is None:
        raise ScenarioError("profiles requires total_units")

    try:
        strategy = StrategyKind(pairs.get("strategy", "baseline"))
    except ValueError:
        raise ScenarioError(f"unknown strategy {pairs.get('strategy')!r}") from None

    members = _parse_asn_list(pairs["resistor_members"]) if "resistor_members" in pairs else None
    country = pairs.get("resistor_country")
    fraction = (
        float(pairs["resistor_top_degree_fraction"])
        if "resistor_top_degree_fraction" in pairs
        else None
    )
    provided = [x for x in (members, country, fraction) if x is not None]
    if len(provided) != 1:
        raise ScenarioError(
            "exactly one of resistor_members, resistor_country, "
            "resistor_top_degree_fraction is required"
        )

    frrp = _parse_bool("frrp", pairs["frrp"]) if "frrp" in pairs else False
    selarp = _parse_bool("selarp", pairs["selarp"]) if "selarp" in pairs else False
    selarp_objective = pairs.get("selarp_objective", "units")
    if selarp_objective not in ("units", "ip_weight"):
        raise ScenarioError(f"unknown selarp_objective {selarp_objective!r}")

    explicit = _parse_asn_list(pairs["deployers"]) if "deployers" in pairs else None
    ring_country = pairs.get("ring_country")
    mode = pairs.get("deployment_mode")
    if mode is None:
        if explicit is not None:
            mode = "explicit"
        elif ring_country is not None:
            mode = "ring"
        else:
            mode = "targeted"
    if mode not in ("targeted", "global", "ring", "explicit"):
        raise ScenarioError(f"unknown deployment_mode {mode!r}")
    if mode == "explicit" and explicit is None:
        raise ScenarioError("explicit deployment requires deployers")
    if mode == "ring" and ring_country is None:
        raise ScenarioError("ring deployment requires ring_country")
    size = int(pairs["deployment_size"]) if "deployment_size" in pairs else None
    if mode in ("targeted", "global") and size is None:
        raise ScenarioError(f"{mode} deployment requires deployment_size")

    alpha = float(pairs["alpha"]) if "alpha" in pairs else None
    psi = float(pairs["psi"]) if "psi" in pairs else None
    if (alpha is None) != (psi is None):
        raise ScenarioError("alpha and psi must be provided together")

    return ScenarioConfig(
        relationships_text=relationships,
        attributes_text=attributes,
        matrix_text=matrix,
        profiles_text=profiles,
        total_units=total_units,
        strategy=strategy,
        resistor_members=members,
        resistor_country=country,
        resistor_top_degree_fraction=fraction,
        frrp=frrp,
        selarp=selarp,
        selarp_objective=selarp_objective,
        deployment_mode=mode,
        deployment_size=size,
        explicit_deployers=explicit,
        ring_country=ring_country,
        defection=_parse_bool("defection", pairs["defection"]) if "defection" in pairs else False,
        alpha=alpha,
        psi=psi,
        usd_ratio=pairs.get("usd_ratio", "1.66652e-20"),
        convergence_cap=int(pairs["convergence_cap"]) if "convergence_cap" in pairs else None,
        threads=int(pairs.get("threads", "1")),
        export_ribs=_parse_bool("export_ribs", pairs.get("export_ribs", "true")),
        merge_siblings=_parse_bool("merge_siblings", pairs.get("merge_siblings", "true")),
        raw=dict(pairs),
    )
