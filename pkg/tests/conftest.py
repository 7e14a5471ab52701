"""Shared fixtures: deterministic manifest factories shaped like the real exports."""

import json

import numpy as np
import pytest

N_MP = 500
N_OQMD = 100
N_CLEAN = N_MP + N_OQMD

# indices of the planted close-energy pair kept by dedup (gap exactly 2 meV)
KEPT_PAIR = (200, 201)
# the raw manifest appends a 0.5 meV duplicate of this record plus a 1-atom reject
DUP_OF = 100


def carbon_energies(n=N_CLEAN, seed=7):
    """Strictly increasing energies with pairwise gaps >= ~1.8 meV except the
    planted 2 meV pair; spans roughly the spread the real exports show."""
    delta = 3.5 / (n - 1)
    rng = np.random.default_rng(seed)
    jitter = rng.uniform(-0.002, 0.002, size=n)
    e = -3.0 + delta * np.arange(n) + jitter
    e[KEPT_PAIR[1]] = e[KEPT_PAIR[0]] + 0.002
    return e


def carbon_record(i, energy, source, rid=None):
    return {
        "id": rid or f"{source.lower()}-C-{i:04d}",
        "source": source,
        "formula": "C",
        "n_atoms": 2 + (i % 49),
        "formation_energy_per_atom": float(energy),
        "band_gap": ((i * 37) % 200) / 100.0,
        "density": 1.5 + (i % 40) * 0.05,
        "volume_per_atom": 5.0 + (i % 60) * 0.2,
        "energy_above_hull": (i % 10) * 0.01,
        "is_stable": i % 7 == 0,
        "magnetization_per_atom": ((i % 5) - 2) * 0.1,
        "spacegroup_number": (i % 230) + 1,
        "energy_per_atom": float(energy) - 8.0,
    }


def carbon_manifest(raw=False):
    """600 clean carbon records (500 MP + 100 OQMD); the raw variant appends a
    0.5 meV duplicate and a 1-atom record so filter+dedup leave exactly 600."""
    energies = carbon_energies()
    records = [
        carbon_record(i, energies[i], "MP" if i < N_MP else "OQMD") for i in range(N_CLEAN)
    ]
    if raw:
        dup = carbon_record(900, energies[DUP_OF] + 0.0005, "OQMD", rid="oqmd-dup-0900")
        reject = carbon_record(901, energies[50] + 0.5, "OQMD", rid="oqmd-bad-0901")
        reject["n_atoms"] = 1
        records += [dup, reject]
    return {"system": "carbon", "records": records}


def write_manifest(path, manifest):
    path.write_text(json.dumps(manifest), encoding="utf-8")
    return str(path)


@pytest.fixture(scope="session")
def carbon_clean_path(tmp_path_factory):
    d = tmp_path_factory.mktemp("manifests")
    return write_manifest(d / "carbon_clean.json", carbon_manifest(raw=False))


@pytest.fixture(scope="session")
def carbon_raw_path(tmp_path_factory):
    d = tmp_path_factory.mktemp("manifests")
    return write_manifest(d / "carbon_raw.json", carbon_manifest(raw=True))


@pytest.fixture(scope="session")
def mp_oqmd_paths(tmp_path_factory):
    """The clean manifest split by source, for transfer-mode tests."""
    d = tmp_path_factory.mktemp("manifests")
    full = carbon_manifest(raw=False)
    mp = {"system": "carbon-mp", "records": [r for r in full["records"] if r["source"] == "MP"]}
    oqmd = {"system": "carbon-oqmd", "records": [r for r in full["records"] if r["source"] == "OQMD"]}
    return (
        write_manifest(d / "carbon_mp.json", mp),
        write_manifest(d / "carbon_oqmd.json", oqmd),
    )


@pytest.fixture(scope="session")
def small_manifest_path(tmp_path_factory):
    """First 80 records only; keeps CLI/loop tests fast."""
    d = tmp_path_factory.mktemp("manifests")
    full = carbon_manifest(raw=False)
    small = {"system": "carbon-small", "records": full["records"][:80]}
    return write_manifest(d / "carbon_small.json", small)
