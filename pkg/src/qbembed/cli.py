"""Experiment runner: convergence traces, overlap sweeps, crossover curves.

Commands write plain CSV files with a metadata comment block (config hash,
seed, package version) so identical configurations reproduce identical bytes.
A gnuplot-compatible plotting script is emitted next to each data file.

Exit codes: 0 success, 2 configuration error, 3 non-convergence,
4 numerical failure. The default output directory can be set with the
``QBEMBED_OUTPUT_DIR`` environment variable.
"""

from __future__ import annotations

import configparser
import hashlib
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import ConvergenceError, QbembedError
from .fragment import fragment_chain, project_embedding_hamiltonian, schmidt_bath
from .integrals import build_h_chain, fcidump_read, fcidump_write, lowdin_orthogonalize, sto3g_integrals
from .matching import (
    ae_eigensolver_calls,
    nsamp_swap,
    nsamp_tomography,
    sample_overlap_swap,
)
from .optimizer import SHOT_POLICIES, build_fragment_problems, qbe_linear, qbe_quadratic
from .qubits import ground_state, qubit_rdm
from .scf import restricted_hartree_fock

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_NUMERICAL = 4

OUTPUT_ENV_VAR = "QBEMBED_OUTPUT_DIR"


class ConfigError(QbembedError, ValueError):
    """Invalid experiment configuration; exits with code 2."""


@dataclass
class ExperimentConfig:
    """Validated settings for one experiment run."""

    n_atoms: int = 8
    spacing: float = 1.4
    fcidump: str = None
    window: int = 3
    variant: str = "quadratic"
    shot_policy: str = "exact"
    lambda0: float = 1.0
    gamma: float = 2.0
    threshold: float = 1e-5
    max_outer: int = 30
    target_eps: float = 1e-3
    learning_rate: float = 1.0
    seed: int = 0
    output_dir: str = None
    extras: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.fcidump is None:
            if self.n_atoms < 1:
                raise ConfigError("system.n_atoms must be positive")
            if self.spacing <= 0:
                raise ConfigError("system.spacing must be positive")
        elif not Path(self.fcidump).exists():
            raise ConfigError(f"system.fcidump path does not exist: {self.fcidump}")
        if self.window % 2 == 0 or self.window < 1:
            raise ConfigError("fragmentation.window must be a positive odd integer")
        if self.variant not in ("quadratic", "linear"):
            raise ConfigError("be.variant must be 'quadratic' or 'linear'")
        if self.shot_policy not in SHOT_POLICIES:
            raise ConfigError(f"be.shot_policy must be one of {SHOT_POLICIES}")
        if self.lambda0 <= 0 or self.gamma <= 1.0:
            raise ConfigError("be.lambda0 must be > 0 and be.gamma > 1")
        if not 0 < self.threshold < 1:
            raise ConfigError("be.threshold must lie in (0, 1)")
        if self.max_outer < 1:
            raise ConfigError("be.max_outer must be positive")
        if not 0 < self.target_eps < 1:
            raise ConfigError("be.target_eps must lie in (0, 1)")

    def canonical_string(self) -> str:
        fields = (
            f"n_atoms={self.n_atoms} spacing={self.spacing!r} fcidump={self.fcidump}"
            f" window={self.window} variant={self.variant} shot_policy={self.shot_policy}"
            f" lambda0={self.lambda0!r} gamma={self.gamma!r} threshold={self.threshold!r}"
            f" max_outer={self.max_outer} target_eps={self.target_eps!r}"
            f" learning_rate={self.learning_rate!r} seed={self.seed}"
        )
        return fields

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_string().encode()).hexdigest()[:12]


_SECTION_KEYS = {
    ("system", "n_atoms"): ("n_atoms", int),
    ("system", "spacing"): ("spacing", float),
    ("system", "fcidump"): ("fcidump", str),
    ("fragmentation", "window"): ("window", int),
    ("be", "variant"): ("variant", str),
    ("be", "shot_policy"): ("shot_policy", str),
    ("be", "lambda0"): ("lambda0", float),
    ("be", "gamma"): ("gamma", float),
    ("be", "threshold"): ("threshold", float),
    ("be", "max_outer"): ("max_outer", int),
    ("be", "target_eps"): ("target_eps", float),
    ("be", "learning_rate"): ("learning_rate", float),
    ("be", "seed"): ("seed", int),
    ("output", "directory"): ("output_dir", str),
}


def load_config(path) -> ExperimentConfig:
    """Parse a key = value config file with bracketed section headers."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    cfg = ExperimentConfig()
    for section in parser.sections():
        for key, raw in parser.items(section):
            spec = _SECTION_KEYS.get((section, key))
            if spec is None:
                raise ConfigError(f"unknown config entry [{section}] {key}")
            name, cast = spec
            try:
                setattr(cfg, name, cast(raw))
            except ValueError as exc:
                raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc
    cfg.validate()
    return cfg


def _output_dir(explicit) -> Path:
    base = explicit or os.environ.get(OUTPUT_ENV_VAR) or "."
    path = Path(base)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path: Path, header, rows, meta: dict) -> None:
    lines = [f"# {key} = {value}" for key, value in meta.items()]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_format_cell(x) for x in row))
    path.write_text("\n".join(lines) + "\n")


def _format_cell(x) -> str:
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _write_gnuplot(path: Path, csv_name: str, title: str, ylog: bool, columns) -> None:
    plot_parts = ", ".join(
        f"'{csv_name}' using {ix}:{iy} with linespoints title '{label}'"
        for ix, iy, label in columns
    )
    script = [
        f"set title '{title}'",
        "set datafile separator ','",
        "set key left",
    ]
    if ylog:
        script.append("set logscale y")
    script.append(f"plot {plot_parts}")
    path.write_text("\n".join(script) + "\n")


def _load_system(cfg: ExperimentConfig):
    """IntegralSet and electron count from either a chain spec or an FCIDUMP."""
    if cfg.fcidump is not None:
        ints, n_elec, _ = fcidump_read(cfg.fcidump)
        return ints, n_elec
    mol = build_h_chain(cfg.n_atoms, cfg.spacing)
    ints = lowdin_orthogonalize(sto3g_integrals(mol))
    return ints, cfg.n_atoms


def run_be(cfg: ExperimentConfig):
    """Execute one bootstrap-embedding run; returns (BEState, csv path, summary)."""
    ints, n_elec = _load_system(cfg)
    if cfg.window > ints.n:
        raise ConfigError("fragmentation.window exceeds the chain length")
    mf = restricted_hartree_fock(ints, n_elec)
    fragments = fragment_chain(ints.n, cfg.window)
    embeddings = [
        project_embedding_hamiltonian(ints, schmidt_bath(mf, f)) for f in fragments
    ]
    problems = build_fragment_problems(fragments, embeddings, n_elec_total=n_elec)
    if cfg.variant == "quadratic":
        state = qbe_quadratic(
            problems,
            lam0=cfg.lambda0,
            gamma=cfg.gamma,
            threshold=cfg.threshold,
            max_outer=cfg.max_outer,
            shot_policy=cfg.shot_policy,
            target_eps=cfg.target_eps,
            seed=cfg.seed,
        )
    else:
        state = qbe_linear(
            problems,
            learning_rate=cfg.learning_rate,
            threshold=cfg.threshold,
            max_outer=cfg.max_outer,
        )

    out = _output_dir(cfg.output_dir)
    csv_path = out / f"be_{cfg.variant}_{cfg.digest()}.csv"
    final_energy = state.records[-1].energy if state.records else float("nan")
    rows = [
        (
            r.iteration,
            r.lam,
            r.delta_rho,
            r.energy,
            abs(r.energy - final_energy),
            r.eigensolver_calls_cum,
            r.shots_cum,
        )
        for r in state.records
    ]
    meta = {
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "version": __version__,
        "variant": cfg.variant,
        "shot_policy": cfg.shot_policy,
        "config": cfg.canonical_string(),
    }
    header = [
        "iteration",
        "lambda",
        "delta_rho",
        "energy",
        "energy_error_vs_final",
        "eigensolver_calls_cum",
        "shots_cum",
    ]
    _write_csv(csv_path, header, rows, meta)
    _write_gnuplot(
        csv_path.with_suffix(".gp"),
        csv_path.name,
        f"BE convergence ({cfg.variant})",
        ylog=True,
        columns=[(1, 3, "delta_rho"), (1, 5, "energy error")],
    )
    summary = (
        f"converged={state.converged} iterations={len(state.records)}"
        f" delta_rho={state.records[-1].delta_rho:.3e}"
        f" energy={final_energy:.9f}"
        f" eigensolver_calls={state.eigensolver_calls} shots={state.shots}"
    )
    return state, csv_path, summary


def run_overlap_sweep(cfg: ExperimentConfig, epsilon: float = 1e-3, sizes=(2, 4, 6, 8)):
    """Tomography-vs-SWAP cost ratios per overlap size, plus an empirical
    convergence trace of the SWAP estimator for two identical chains."""
    out = _output_dir(cfg.output_dir)
    rows = []
    for m in sizes:
        tmg = nsamp_tomography(0.0, epsilon, m)
        swp = nsamp_swap(0.0, epsilon)
        rows.append((m, tmg, swp, tmg / swp))
    meta = {
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "version": __version__,
        "epsilon": epsilon,
    }
    sweep_path = out / f"overlap_sweep_{cfg.digest()}.csv"
    _write_csv(sweep_path, ["m_qubits", "nsamp_tomography", "nsamp_swap", "ratio"], rows, meta)
    _write_gnuplot(
        sweep_path.with_suffix(".gp"),
        sweep_path.name,
        "Tomography / SWAP sampling ratio",
        ylog=True,
        columns=[(1, 4, "ratio")],
    )

    # empirical estimator convergence: two identical H4 ground states,
    # overlap region = one site (two qubits)
    ints, n_elec = _load_system(
        ExperimentConfig(n_atoms=4, spacing=cfg.spacing, seed=cfg.seed)
    )
    from .fragment import embedding_from_integrals

    _, psi = ground_state(embedding_from_integrals(ints, n_elec), n_elec)
    rho = qubit_rdm(psi, (2, 3))
    exact = float(np.trace(rho.matrix @ rho.matrix).real)
    inset_rows = []
    rng = np.random.default_rng(cfg.seed)
    for shots in (10**3, 10**4, 10**5, 10**6, 4 * 10**6):
        est = sample_overlap_swap(rho, rho, shots, rng)
        inset_rows.append((shots, est.value, exact, abs(est.value - exact)))
    inset_path = out / f"overlap_inset_{cfg.digest()}.csv"
    _write_csv(
        inset_path,
        ["shots", "estimate", "exact", "abs_error"],
        inset_rows,
        meta,
    )
    return sweep_path, inset_path, rows, inset_rows


def run_crossover(cfg: ExperimentConfig, s_point: float = 0.4, epsilon_point: float = 1e-3):
    """Eigensolver-call cost curves: eps sweep at fixed overlap, S sweep at fixed eps."""
    out = _output_dir(cfg.output_dir)
    meta = {
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "version": __version__,
        "s_point": s_point,
        "epsilon_point": epsilon_point,
    }
    eps_grid = np.logspace(-4, -2, 9)
    eps_rows = [
        (float(e), nsamp_swap(s_point, float(e)), ae_eigensolver_calls(float(e)))
        for e in eps_grid
    ]
    eps_path = out / f"crossover_eps_{cfg.digest()}.csv"
    _write_csv(eps_path, ["epsilon", "calls_swap", "calls_swap_ae"], eps_rows, meta)
    _write_gnuplot(
        eps_path.with_suffix(".gp"),
        eps_path.name,
        f"Calls vs precision at S={s_point}",
        ylog=True,
        columns=[(1, 2, "SWAP"), (1, 3, "SWAP+AE")],
    )

    s_grid = np.linspace(0.0, 0.95, 20)
    s_rows = [
        (float(s), nsamp_swap(float(s), epsilon_point), ae_eigensolver_calls(epsilon_point))
        for s in s_grid
    ]
    s_path = out / f"crossover_s_{cfg.digest()}.csv"
    _write_csv(s_path, ["overlap_s", "calls_swap", "calls_swap_ae"], s_rows, meta)
    return eps_path, s_path, eps_rows, s_rows


# ---------------------------------------------------------------------------
# click commands
# ---------------------------------------------------------------------------


def _config_from_options(config_path, **overrides) -> ExperimentConfig:
    cfg = load_config(config_path) if config_path else ExperimentConfig()
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


@click.group()
@click.version_option(version=__version__)
def main():
    """Bootstrap-embedding simulator for hydrogen chains."""


_shared = [
    click.option("--config", "config_path", type=click.Path(), default=None, help="INI config file."),
    click.option("--n-atoms", type=int, default=None, help="Chain length."),
    click.option("--spacing", type=float, default=None, help="Adjacent H-H distance in Bohr."),
    click.option("--output-dir", type=click.Path(), default=None, help="Output directory."),
    click.option("--seed", type=int, default=None, help="Random seed."),
]


def _with_shared(cmd):
    for opt in reversed(_shared):
        cmd = opt(cmd)
    return cmd


@main.command()
@_with_shared
def integrals(config_path, n_atoms, spacing, output_dir, seed):
    """Build chain integrals and report basic invariants."""
    cfg = _config_from_options(
        config_path, n_atoms=n_atoms, spacing=spacing, output_dir=output_dir, seed=seed
    )
    ints, n_elec = _load_system(cfg)
    click.echo(
        f"orbitals={ints.n} electrons={n_elec} e_nuc={ints.e_nuc:.10f}"
        f" h_norm={np.linalg.norm(ints.h):.6f}"
    )


@main.command()
@_with_shared
def scf(config_path, n_atoms, spacing, output_dir, seed):
    """Run restricted Hartree-Fock on the configured system."""
    cfg = _config_from_options(
        config_path, n_atoms=n_atoms, spacing=spacing, output_dir=output_dir, seed=seed
    )
    ints, n_elec = _load_system(cfg)
    mf = restricted_hartree_fock(ints, n_elec)
    click.echo(f"e_hf={mf.e_hf:.10f} homo={mf.mo_energy[n_elec // 2 - 1]:.6f}")


@main.command("fcidump")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--n-atoms", type=int, default=None)
@click.option("--spacing", type=float, default=None)
@click.option("--export", "export_path", type=click.Path(), default=None, help="Write chain integrals to FCIDUMP.")
@click.option("--import", "import_path", type=click.Path(), default=None, help="Read an FCIDUMP and report contents.")
def fcidump_cmd(config_path, n_atoms, spacing, export_path, import_path):
    """Import or export integrals in the FCIDUMP text format."""
    if (export_path is None) == (import_path is None):
        raise ConfigError("pass exactly one of --export or --import")
    if export_path:
        cfg = _config_from_options(config_path, n_atoms=n_atoms, spacing=spacing)
        ints, n_elec = _load_system(cfg)
        fcidump_write(ints, n_elec, 0, export_path)
        click.echo(f"wrote {export_path} (norb={ints.n}, nelec={n_elec})")
    else:
        ints, n_elec, ms2 = fcidump_read(import_path)
        click.echo(f"read {import_path}: norb={ints.n} nelec={n_elec} ms2={ms2} e_nuc={ints.e_nuc:.10f}")


@main.command("be-run")
@_with_shared
@click.option("--window", type=int, default=None)
@click.option("--variant", type=click.Choice(["quadratic", "linear"]), default=None)
@click.option("--shot-policy", type=click.Choice(list(SHOT_POLICIES)), default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--max-outer", type=int, default=None)
def be_run(config_path, n_atoms, spacing, output_dir, seed, window, variant, shot_policy, threshold, max_outer):
    """Run bootstrap embedding and write the convergence CSV."""
    cfg = _config_from_options(
        config_path,
        n_atoms=n_atoms,
        spacing=spacing,
        output_dir=output_dir,
        seed=seed,
        window=window,
        variant=variant,
        shot_policy=shot_policy,
        threshold=threshold,
        max_outer=max_outer,
    )
    state, csv_path, summary = run_be(cfg)
    click.echo(f"{summary} csv={csv_path}")
    if not state.converged:
        raise ConvergenceError("bootstrap embedding did not reach the mismatch threshold")


@main.command("overlap-sweep")
@_with_shared
@click.option("--epsilon", type=float, default=1e-3, show_default=True)
def overlap_sweep(config_path, n_atoms, spacing, output_dir, seed, epsilon):
    """Sweep overlap-region sizes; write cost ratios and the estimator trace."""
    cfg = _config_from_options(
        config_path, n_atoms=n_atoms, spacing=spacing, output_dir=output_dir, seed=seed
    )
    sweep_path, inset_path, rows, inset_rows = run_overlap_sweep(cfg, epsilon=epsilon)
    click.echo(f"sweep={sweep_path} inset={inset_path} final_error={inset_rows[-1][3]:.2e}")


@main.command()
@_with_shared
@click.option("--overlap", "s_point", type=float, default=0.4, show_default=True)
@click.option("--epsilon", "epsilon_point", type=float, default=1e-3, show_default=True)
def crossover(config_path, n_atoms, spacing, output_dir, seed, s_point, epsilon_point):
    """SWAP vs SWAP+AE eigensolver-call curves over precision and overlap."""
    cfg = _config_from_options(
        config_path, n_atoms=n_atoms, spacing=spacing, output_dir=output_dir, seed=seed
    )
    eps_path, s_path, eps_rows, s_rows = run_crossover(cfg, s_point, epsilon_point)
    click.echo(f"eps_sweep={eps_path} s_sweep={s_path}")


def entrypoint(argv=None) -> int:
    """Main with the documented exit-code contract."""
    try:
        main.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.exceptions.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        click.echo(f"not converged: {exc}", err=True)
        return EXIT_NOT_CONVERGED
    except (ArithmeticError, np.linalg.LinAlgError, QbembedError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return EXIT_NUMERICAL


def console_main():
    sys.exit(entrypoint())


if __name__ == "__main__":
    console_main()
