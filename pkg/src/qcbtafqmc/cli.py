"""Command line front end.

    qcbtafqmc exact|tomograph|energy|afqmc|cbs --config run.toml [--seed N]
              [--shots inf|K] [--output-dir DIR]

Every data file written embeds the SHA-256 of the resolved configuration
and the master seed. No timestamps are written, so reruns are
byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import cbs as cbsmod
from .afqmc import AFQMCConfig, run_afqmc
from .cbt import (CBTConfig, TrialWavefunction, fidelity, read_trial, reconstruct_trial, shot_sweep,
                  write_trial)
from .energy import composite_energy, sub_seed
from .errors import InputError, QCBTError
from .exactdiag import fci_ground_state, hf_determinant, read_civector, write_civector
from .hamio import ActiveSpaceSpec, extract_active_space, read_fcidump
from .qsim import from_civector

log = logging.getLogger("qcbtafqmc")

DEFAULT_SWEEP_SHOTS = (10**3, 10**4, 10**5, 10**6)
AFQMC_KEYS = {"blocks", "steps_per_block", "n_walkers", "dt", "n_equilibration", "reortho_interval",
              "init", "threads", "chol_threshold", "energy_cap", "force_bias_cap", "walker_chunk"}


@dataclass
class PipelineConfig:
    raw: dict
    base_dir: Path
    seed: int
    output_dir: Path
    shots_override: str | None = None
    hash: str = ""
    extras: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        sec = self.raw.get(name, {})
        if not isinstance(sec, dict):
            raise InputError(f"[{name}] must be a table")
        return sec

    def resolve_path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    # -- stage inputs

    def hamiltonian(self):
        ref = self.raw.get("fcidump")
        if not ref:
            raise InputError("config needs 'fcidump' (a path or 'bundled:<name>')")
        if ref.startswith("bundled:"):
            name = ref.split(":", 1)[1]
            res = resources.files("qcbtafqmc").joinpath(f"data/{name}.fcidump")
            if not res.is_file():
                raise InputError(f"no bundled FCIDUMP named {name!r}")
            return read_fcidump(res)
        path = self.resolve_path(ref)
        if not path.is_file():
            raise InputError(f"FCIDUMP not found: {path}")
        return read_fcidump(path)

    def active_space(self) -> ActiveSpaceSpec | None:
        sec = self.section("active_space")
        if not sec:
            return None
        try:
            return ActiveSpaceSpec(int(sec["n_orb"]), int(sec["n_elec"]),
                                   tuple(sec.get("frozen", ())),
                                   tuple(sec["active"]) if "active" in sec else None)
        except KeyError as exc:
            raise InputError(f"[active_space] missing key {exc}") from None

    def cbt(self) -> CBTConfig:
        sec = self.section("cbt")
        shots = parse_shots(self.shots_override if self.shots_override is not None
                            else sec.get("shots", 10**6))
        counts = {k: parse_shots(sec[k]) if k in sec and self.shots_override is None else shots
                  for k in ("n_f", "n_a", "n_b")}
        seed = int(sec.get("seed", sub_seed(self.seed, 10)))
        try:
            return CBTConfig(r_max=int(sec.get("r_max", 5)), seed=seed, **counts)
        except ValueError as exc:
            raise InputError(f"[cbt] {exc}") from None

    def afqmc(self) -> AFQMCConfig:
        sec = self.section("afqmc")
        unknown = set(sec) - AFQMC_KEYS - {"seed", "trial"}
        if unknown:
            raise InputError(f"[afqmc] unknown keys {sorted(unknown)}")
        kw = {k: v for k, v in sec.items() if k in AFQMC_KEYS}
        seed = int(sec.get("seed", sub_seed(self.seed, 20)))
        try:
            return AFQMCConfig(seed=seed, **kw)
        except (TypeError, ValueError) as exc:
            raise InputError(f"[afqmc] {exc}") from None

    def stamp(self) -> dict:
        return {"config_sha256": self.hash, "seed": self.seed}


def parse_shots(value) -> int | None:
    if value is None or (isinstance(value, str) and value.strip().lower() in ("inf", "infinity")):
        return None
    try:
        n = int(value)
    except (TypeError, ValueError):
        raise InputError(f"shot count must be a positive integer or 'inf', got {value!r}") from None
    if n < 1:
        raise InputError(f"shot count must be positive, got {n}")
    return n


def load_config(path: str | None, seed: int | None, shots: str | None, output_dir: str | None) -> PipelineConfig:
    if path is None:
        raw, base, text = {}, Path.cwd(), b""
    else:
        p = Path(path)
        if not p.is_file():
            raise InputError(f"config file not found: {p}")
        text = p.read_bytes()
        try:
            raw = tomllib.loads(text.decode())
        except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
            raise InputError(f"cannot parse config {p}: {exc}") from None
        base = p.resolve().parent
    master = int(seed if seed is not None else raw.get("seed", 0))
    out = Path(output_dir or raw.get("output_dir", "out"))
    digest = hashlib.sha256()
    digest.update(text)
    digest.update(json.dumps({"seed": master, "shots": shots}, sort_keys=True).encode())
    return PipelineConfig(raw, base, master, out, shots, digest.hexdigest())


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")


def _header(cfg: PipelineConfig) -> str:
    return f"# config_sha256: {json.dumps(cfg.hash)}\n# master_seed: {cfg.seed}\n"


def _stage_hamiltonian(cfg: PipelineConfig):
    h = cfg.hamiltonian()
    spec = cfg.active_space()
    return (extract_active_space(h, spec) if spec else h), h, spec


# ---------------------------------------------------------------- commands

def cmd_exact(cfg: PipelineConfig) -> dict:
    h, _, _ = _stage_hamiltonian(cfg)
    vec = fci_ground_state(h)
    (cfg.output_dir / "state.txt").write_text(write_civector(vec, h.n_orb))
    result = {"energy": vec.energy, "n_orb": h.n_orb, "n_elec": h.n_elec,
              "n_determinants": len(vec.basis), **cfg.stamp()}
    _dump_json(cfg.output_dir / "energy.json", result)
    return result


def _load_state(cfg: PipelineConfig):
    if cfg.extras.get("state"):
        path = Path(cfg.extras["state"])
    elif cfg.section("cbt").get("state"):
        path = cfg.resolve_path(cfg.section("cbt")["state"])
    else:
        path = None
    if path is not None:
        if not path.is_file():
            raise InputError(f"state file not found: {path}")
        vec, n_orb = read_civector(path.read_text())
        return from_civector(vec, 2 * n_orb)
    h, _, _ = _stage_hamiltonian(cfg)
    vec = fci_ground_state(h)
    return from_civector(vec, 2 * h.n_orb)


def cmd_tomograph(cfg: PipelineConfig) -> dict:
    sv = _load_state(cfg)
    cbt_cfg = cfg.cbt()
    trial = reconstruct_trial(sv, cbt_cfg, label="state")
    trial.provenance.update(cfg.stamp())
    write_trial(trial, cfg.output_dir / "trial.txt")
    result = {"fidelity": fidelity(trial, sv), "R": len(trial),
              "total_shots": trial.provenance["total_shots"], **cfg.stamp()}
    sec = cfg.section("cbt")
    if sec.get("sweep", False):
        shot_list = [parse_shots(s) for s in sec.get("sweep_shots", DEFAULT_SWEEP_SHOTS)]
        n_seeds = int(sec.get("sweep_seeds", 20))
        seeds = [sub_seed(cbt_cfg.seed, 1000 + i) for i in range(n_seeds)]
        rows = shot_sweep(sv, shot_list, seeds, cbt_cfg.r_max)
        lines = [_header(cfg) + "shots,seed,R,total_shots,fidelity,infidelity"]
        lines += [f"{r['shots']},{r['seed']},{r['R']},{r['total_shots']},{float(r['fidelity'])!r},{1.0 - float(r['fidelity'])!r}"
                  for r in rows]
        (cfg.output_dir / "sweep.csv").write_text("\n".join(lines) + "\n")
        result["sweep_rows"] = len(rows)
    _dump_json(cfg.output_dir / "tomograph.json", result)
    return result


def _afqmc_trial(cfg: PipelineConfig, h) -> TrialWavefunction:
    choice = cfg.section("afqmc").get("trial", "cbt")
    if choice == "hf":
        return TrialWavefunction([hf_determinant(h.n_alpha, h.n_beta)], [1.0], h.n_orb)
    if choice == "cbt":
        sv = from_civector(fci_ground_state(h), 2 * h.n_orb)
        return reconstruct_trial(sv, cfg.cbt(), label="exact ground state")
    path = cfg.resolve_path(choice)
    if not path.is_file():
        raise InputError(f"trial file not found: {path}")
    return read_trial(path.read_text())


def cmd_afqmc(cfg: PipelineConfig) -> dict:
    h, _, _ = _stage_hamiltonian(cfg)
    trial = _afqmc_trial(cfg, h)
    acfg = cfg.afqmc()
    trace = run_afqmc(h, trial, acfg)
    (cfg.output_dir / "trace.csv").write_text(_header(cfg) + trace.to_csv())
    summary = {**trace.summary(), "trial_determinants": len(trial), **cfg.stamp()}
    _dump_json(cfg.output_dir / "afqmc.json", summary)
    return summary


def cmd_energy(cfg: PipelineConfig) -> dict:
    h = cfg.hamiltonian()
    spec = cfg.active_space() or ActiveSpaceSpec(h.n_orb, h.n_elec)
    res = composite_energy(h, spec, cfg.cbt(), cfg.afqmc())
    (cfg.output_dir / "trace_full.csv").write_text(_header(cfg) + res.e_full_afqmc.to_csv())
    (cfg.output_dir / "trace_active.csv").write_text(_header(cfg) + res.e_act_afqmc.to_csv())
    out = {**res.to_dict(), **cfg.stamp()}
    _dump_json(cfg.output_dir / "composite.json", out)
    return out


def cmd_cbs(cfg: PipelineConfig) -> dict:
    sec = cfg.section("cbs")
    source = sec.get("series", "bundled")
    if source == "bundled":
        data = cbsmod.bundled_series()
    else:
        path = cfg.resolve_path(source)
        if not path.is_file():
            raise InputError(f"series file not found: {path}")
        data = cbsmod.read_series_csv(path.read_text())
    schemes = sec.get("schemes", list(cbsmod.SCHEMES))
    summary = {}
    for scheme in schemes:
        res = {sp: r.to_dict() for sp, r in cbsmod.extrapolate_all(data, [scheme])[scheme].items()}
        _dump_json(cfg.output_dir / f"cbs_{scheme}.json", {"scheme": scheme, "results": res, **cfg.stamp()})
        summary[scheme] = {sp: r["e_inf"] for sp, r in res.items()}
    out = {"schemes": summary, **cfg.stamp()}
    if source == "bundled" or sec.get("regression", False):
        report = cbsmod.regression_report(data)
        _dump_json(cfg.output_dir / "cbs_regression.json", {**report, **cfg.stamp()})
        out["regression_pass"] = report["all_pass"]
        if not report["all_pass"]:
            raise cbsmod.FitError("regression cells outside tolerance; see cbs_regression.json")
    return out


COMMANDS = {"exact": cmd_exact, "tomograph": cmd_tomograph, "energy": cmd_energy,
            "afqmc": cmd_afqmc, "cbs": cmd_cbs}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qcbtafqmc", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="TOML configuration file")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--shots", help="shots per CBT stage, or 'inf' for exact probabilities")
    ap.add_argument("--state", help="state file for 'tomograph' (bitstring re im lines)")
    ap.add_argument("--output-dir", help="directory for all outputs (default: config or ./out)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed, args.shots, args.output_dir)
        if args.state:
            cfg.extras["state"] = args.state
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[args.command](cfg)
    except QCBTError as exc:
        print(f"qcbtafqmc {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"qcbtafqmc {args.command}: error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({k: v for k, v in result.items() if not isinstance(v, (dict, list))},
                     sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
