"""Material record ingestion, cleaning, featurization, and pool/test splits.

Records arrive as offline JSON manifests (one per database export). The
pipeline order is: load -> filter -> deduplicate -> featurize -> split.
Standardization is fitted on labeled/training rows only and applied to
everything else with the fitted parameters.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from importlib import resources
from math import gcd

import numpy as np

from .errors import InsufficientDataError, ManifestError, ValidationError

SOURCES = ("MP", "OQMD")

COMPOSITIONAL_FEATURES = (
    "mean_atomic_number",
    "std_atomic_number",
    "mean_atomic_mass",
    "mean_electronegativity",
    "min_electronegativity",
    "max_electronegativity",
    "electronegativity_range",
    "n_distinct_elements",
)

PROPERTY_FEATURES = (
    "band_gap",
    "density",
    "volume_per_atom",
    "n_atoms",
    "energy_above_hull",
    "is_stable",
    "magnetization_per_atom",
    "spacegroup_number",
    "energy_per_atom",
)

N_FEATURES = len(COMPOSITIONAL_FEATURES) + len(PROPERTY_FEATURES)

_STD_FLOOR = 1e-12  # below this a column is treated as constant


@dataclass(frozen=True)
class MaterialRecord:
    """One database entry with precomputed properties (labels included)."""

    id: str
    source: str
    formula: str
    n_atoms: int
    formation_energy_per_atom: float
    band_gap: float
    density: float
    volume_per_atom: float
    energy_above_hull: float
    is_stable: bool
    magnetization_per_atom: float
    spacegroup_number: int
    energy_per_atom: float


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered 17-feature descriptor layout.

    With ``leakage_guard`` the total-energy feature (which correlates with
    the formation-energy target) is swapped for the composition-weighted
    mean covalent radius.
    """

    leakage_guard: bool = False

    @property
    def names(self) -> tuple[str, ...]:
        props = PROPERTY_FEATURES
        if self.leakage_guard:
            props = props[:-1] + ("mean_covalent_radius",)
        return COMPOSITIONAL_FEATURES + props

    @property
    def n_compositional(self) -> int:
        return len(COMPOSITIONAL_FEATURES)

    @property
    def n_property(self) -> int:
        return len(PROPERTY_FEATURES)


@dataclass
class StandardizationParams:
    """Per-column affine transform fitted on a training subset only."""

    means: np.ndarray
    std_devs: np.ndarray
    constant_mask: np.ndarray

    def to_dict(self) -> dict:
        return {
            "means": self.means.tolist(),
            "std_devs": self.std_devs.tolist(),
            "constant_mask": self.constant_mask.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationParams":
        return cls(
            means=np.asarray(d["means"], dtype=np.float64),
            std_devs=np.asarray(d["std_devs"], dtype=np.float64),
            constant_mask=np.asarray(d["constant_mask"], dtype=bool),
        )


@dataclass(frozen=True)
class SplitDataset:
    """Disjoint, exhaustive pool/test partition of record indices."""

    pool_indices: np.ndarray
    test_indices: np.ndarray
    seed: int


# ---------------------------------------------------------------------------
# element data

_ELEMENT_TABLE_FILE = "data/elements_v1.json"  # bump the suffix on data changes

_ELEMENTS: dict | None = None


def element_table() -> dict:
    """Embedded per-element data: atomic number/mass, Pauling EN, covalent radius.

    A plain symbol -> fields map; electronegativity is null for the noble
    gases that have no Pauling value (He, Ne, Ar, Rn).
    """
    global _ELEMENTS
    if _ELEMENTS is None:
        path = resources.files("albench").joinpath(_ELEMENT_TABLE_FILE)
        with path.open("r", encoding="utf-8") as fh:
            _ELEMENTS = json.load(fh)
    return _ELEMENTS


# ---------------------------------------------------------------------------
# manifest loading

_REQUIRED_FIELDS = (
    "id",
    "source",
    "formula",
    "n_atoms",
    "density",
    "volume_per_atom",
    "spacegroup_number",
    "energy_per_atom",
)

# absent optional fields and their documented defaults; the two NaN defaults
# keep the record loadable but make filter_records reject it
_OPTIONAL_DEFAULTS = {
    "formation_energy_per_atom": math.nan,
    "band_gap": math.nan,
    "magnetization_per_atom": 0.0,
    "energy_above_hull": 0.0,
    "is_stable": False,
}


def load_manifest(path) -> list[MaterialRecord]:
    """Parse a JSON manifest into records, in file order.

    Raises ManifestError for structural problems (with record index where
    applicable) and ValidationError for duplicate record ids.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {path}")
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON (line {exc.lineno}): {exc.msg}")

    if not isinstance(doc, dict) or "records" not in doc:
        raise ManifestError(f"manifest {path} must be an object with a 'records' array")
    raw_records = doc["records"]
    if not isinstance(raw_records, list):
        raise ManifestError(f"manifest {path}: 'records' must be an array")

    records = []
    seen_ids = set()
    for i, raw in enumerate(raw_records):
        if not isinstance(raw, dict):
            raise ManifestError(f"record {i}: expected an object")
        missing = [f for f in _REQUIRED_FIELDS if f not in raw]
        if missing:
            raise ManifestError(f"record {i}: missing required field(s) {missing}")
        rid = str(raw["id"])
        if rid in seen_ids:
            raise ValidationError(f"record {i}: duplicate id {rid!r} within manifest")
        seen_ids.add(rid)
        try:
            rec = MaterialRecord(
                id=rid,
                source=str(raw["source"]),
                formula=str(raw["formula"]),
                n_atoms=int(raw["n_atoms"]),
                formation_energy_per_atom=float(
                    raw.get("formation_energy_per_atom", _OPTIONAL_DEFAULTS["formation_energy_per_atom"])
                ),
                band_gap=float(raw.get("band_gap", _OPTIONAL_DEFAULTS["band_gap"])),
                density=float(raw["density"]),
                volume_per_atom=float(raw["volume_per_atom"]),
                energy_above_hull=float(
                    raw.get("energy_above_hull", _OPTIONAL_DEFAULTS["energy_above_hull"])
                ),
                is_stable=bool(raw.get("is_stable", _OPTIONAL_DEFAULTS["is_stable"])),
                magnetization_per_atom=float(
                    raw.get("magnetization_per_atom", _OPTIONAL_DEFAULTS["magnetization_per_atom"])
                ),
                spacegroup_number=int(raw["spacegroup_number"]),
                energy_per_atom=float(raw["energy_per_atom"]),
            )
        except (TypeError, ValueError) as exc:
            raise ManifestError(f"record {i} (id={raw.get('id')!r}): bad field value: {exc}")
        _validate_record(rec, i)
        records.append(rec)
    return records


def _validate_record(rec: MaterialRecord, index: int) -> None:
    if rec.source not in SOURCES:
        raise ManifestError(f"record {index} (id={rec.id!r}): unknown source {rec.source!r}")
    if rec.n_atoms < 1:
        raise ManifestError(f"record {index} (id={rec.id!r}): n_atoms must be positive")
    if not rec.density > 0:
        raise ManifestError(f"record {index} (id={rec.id!r}): density must be > 0")
    if not rec.volume_per_atom > 0:
        raise ManifestError(f"record {index} (id={rec.id!r}): volume_per_atom must be > 0")
    if math.isfinite(rec.band_gap) and rec.band_gap < 0:
        raise ManifestError(f"record {index} (id={rec.id!r}): band_gap must be >= 0")
    if rec.energy_above_hull < 0:
        raise ManifestError(f"record {index} (id={rec.id!r}): energy_above_hull must be >= 0")
    if not 1 <= rec.spacegroup_number <= 230:
        raise ManifestError(f"record {index} (id={rec.id!r}): spacegroup_number outside [1, 230]")


# ---------------------------------------------------------------------------
# cleaning

def filter_records(records: list[MaterialRecord]) -> list[MaterialRecord]:
    """Keep records with 2-50 atoms and finite formation energy / band gap."""
    return [
        r
        for r in records
        if 2 <= r.n_atoms <= 50
        and math.isfinite(r.formation_energy_per_atom)
        and math.isfinite(r.band_gap)
    ]


_FORMULA_TOKEN = re.compile(r"([A-Z][a-z]?)(\d*)|(\()|(\))(\d*)|(.)")


def parse_formula(formula: str) -> dict[str, int]:
    """Parse a composition string like 'TiO2' or 'Ca(OH)2' into element counts."""
    if not formula or not formula.strip():
        raise ValidationError("empty formula")
    stack: list[dict[str, int]] = [{}]
    for m in _FORMULA_TOKEN.finditer(formula.strip()):
        sym, count, open_p, close_p, close_mult, junk = m.groups()
        if junk is not None:
            raise ValidationError(f"unparseable formula {formula!r} (at {junk!r})")
        if sym is not None:
            n = int(count) if count else 1
            if n <= 0:
                raise ValidationError(f"unparseable formula {formula!r} (zero count)")
            stack[-1][sym] = stack[-1].get(sym, 0) + n
        elif open_p is not None:
            stack.append({})
        elif close_p is not None:
            if len(stack) < 2:
                raise ValidationError(f"unparseable formula {formula!r} (unbalanced ')')")
            group = stack.pop()
            mult = int(close_mult) if close_mult else 1
            for s, n in group.items():
                stack[-1][s] = stack[-1].get(s, 0) + n * mult
    if len(stack) != 1:
        raise ValidationError(f"unparseable formula {formula!r} (unbalanced '(')")
    if not stack[0]:
        raise ValidationError(f"unparseable formula {formula!r}")
    return stack[0]


def reduced_formula(formula: str) -> str:
    """Canonical reduced composition, e.g. 'C4' -> 'C', 'Ti2O4' -> 'O2Ti'."""
    counts = parse_formula(formula)
    g = 0
    for n in counts.values():
        g = gcd(g, n)
    return "".join(
        f"{sym}{counts[sym] // g if counts[sym] // g > 1 else ''}"
        for sym in sorted(counts)
    )


def deduplicate(records: list[MaterialRecord], energy_tol: float = 0.001) -> list[MaterialRecord]:
    """Drop later records that repeat an earlier one.

    Two records are duplicates iff their reduced formulas match and their
    formation energies differ by less than ``energy_tol`` (eV/atom).
    Earlier record in input order wins; the rule is greedy, so a chain
    A~B, B~C with A!~C keeps A and C.
    """
    if not energy_tol > 0:
        raise ValidationError("energy_tol must be > 0")
    kept: list[MaterialRecord] = []
    kept_energies: dict[str, list[float]] = {}
    for rec in records:
        try:
            key = reduced_formula(rec.formula)
        except ValidationError as exc:
            raise ValidationError(f"record {rec.id!r}: {exc}")
        ef = rec.formation_energy_per_atom
        others = kept_energies.get(key, [])
        if any(abs(ef - other) < energy_tol for other in others):
            continue
        kept.append(rec)
        kept_energies.setdefault(key, []).append(ef)
    return kept


# ---------------------------------------------------------------------------
# featurization

def featurize(record: MaterialRecord, schema: FeatureSchema) -> np.ndarray:
    """Compute the record's 17 descriptor values in schema order (unstandardized).

    Compositional statistics are weighted by atom fraction; min/max
    electronegativity range over the distinct constituent elements.
    """
    try:
        counts = parse_formula(record.formula)
    except ValidationError as exc:
        raise ValidationError(f"record {record.id!r}: {exc}")
    table = element_table()

    total = sum(counts.values())
    zs, masses, ens, radii, fracs = [], [], [], [], []
    for sym, n in counts.items():
        if sym not in table:
            raise ValidationError(f"record {record.id!r}: unknown element {sym!r}")
        row = table[sym]
        if row["electronegativity"] is None:
            raise ValidationError(
                f"record {record.id!r}: element {sym!r} has no tabulated electronegativity"
            )
        zs.append(row["atomic_number"])
        masses.append(row["atomic_mass"])
        ens.append(row["electronegativity"])
        radii.append(row["covalent_radius"])
        fracs.append(n / total)

    zs = np.asarray(zs, dtype=np.float64)
    masses = np.asarray(masses, dtype=np.float64)
    ens = np.asarray(ens, dtype=np.float64)
    radii = np.asarray(radii, dtype=np.float64)
    fracs = np.asarray(fracs, dtype=np.float64)

    mean_z = float(fracs @ zs)
    std_z = float(math.sqrt(fracs @ (zs - mean_z) ** 2))
    en_min = float(ens.min())
    en_max = float(ens.max())

    values = [
        mean_z,
        std_z,
        float(fracs @ masses),
        float(fracs @ ens),
        en_min,
        en_max,
        en_max - en_min,
        float(len(counts)),
        record.band_gap,
        record.density,
        record.volume_per_atom,
        float(record.n_atoms),
        record.energy_above_hull,
        1.0 if record.is_stable else 0.0,
        record.magnetization_per_atom,
        float(record.spacegroup_number),
        float(fracs @ radii) if schema.leakage_guard else record.energy_per_atom,
    ]
    vec = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(vec)):
        bad = schema.names[int(np.flatnonzero(~np.isfinite(vec))[0])]
        raise ValidationError(f"record {record.id!r}: non-finite feature {bad!r}")
    return vec


def featurize_records(records: list[MaterialRecord], schema: FeatureSchema) -> np.ndarray:
    """Stack featurize() over records into an (n, 17) matrix."""
    if not records:
        return np.zeros((0, N_FEATURES), dtype=np.float64)
    return np.vstack([featurize(r, schema) for r in records])


# ---------------------------------------------------------------------------
# standardization

def fit_standardization(features: np.ndarray) -> StandardizationParams:
    """Per-column mean and population std over a training matrix (n >= 2).

    Columns with std below 1e-12 are flagged constant and standardize to 0.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError("expected a 2-D feature matrix")
    if X.shape[0] < 2:
        raise InsufficientDataError("need at least 2 rows to fit standardization")
    means = X.mean(axis=0)
    stds = X.std(axis=0)  # population convention, pinned for reproducibility
    return StandardizationParams(means=means, std_devs=stds, constant_mask=stds < _STD_FLOOR)


def apply_standardization(features: np.ndarray, params: StandardizationParams) -> np.ndarray:
    """x' = (x - mean) / std per column; constant columns map to 0."""
    X = np.asarray(features, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != params.means.shape[0]:
        raise ValidationError(
            f"feature dimension {X.shape} does not match fitted params "
            f"({params.means.shape[0]} columns)"
        )
    safe_std = np.where(params.constant_mask, 1.0, params.std_devs)
    out = (X - params.means) / safe_std
    out[:, params.constant_mask] = 0.0
    return out[0] if single else out


# ---------------------------------------------------------------------------
# splitting

def split(n_records: int, ratio: float, seed: int) -> SplitDataset:
    """Seeded shuffle-then-cut partition into pool (ratio) and test (rest).

    |test| = round((1 - ratio) * n) with half-up rounding; both index sets
    are returned sorted ascending.
    """
    if not 0 < ratio < 1:
        raise ValidationError("ratio must be in (0, 1)")
    if n_records < 5:
        raise InsufficientDataError("need at least 5 records to split")
    n_test = int(math.floor((1 - ratio) * n_records + 0.5))
    if n_test == 0 or n_test == n_records:
        raise InsufficientDataError(f"split of {n_records} at ratio {ratio} leaves an empty part")
    perm = np.random.default_rng(seed).permutation(n_records)
    pool = np.sort(perm[: n_records - n_test])
    test = np.sort(perm[n_records - n_test :])
    return SplitDataset(pool_indices=pool, test_indices=test, seed=seed)
