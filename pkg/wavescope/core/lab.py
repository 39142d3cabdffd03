# wavescope/core/lab.py

import logging
import math
import os
import platform
import time

import numpy as np
import scipy

from .. import __version__
from ..modules.domain_geometry_module import DomainGeometryModule
from ..modules.fbi_transform_module import FbiTransformModule
from ..modules.smallness_propagation_module import SmallnessPropagationModule
from ..modules.stability_harness_module import StabilityExperiment, StabilityHarnessModule
from ..modules.wave_forward_module import WaveForwardModule
from ..util import artifacts
from ..util.errors import InsufficientData, ValidationError, WavescopeError
from .config import RunConfig, build_anisotropy, build_boundary_data, build_domain
from .entities.records import ThreeSphereParams

logger = logging.getLogger(__name__)


class Lab:
    """Owns the modules and runs one configured pipeline."""
    def __init__(self, config: RunConfig):
        self.config = config
        calibration = config.calibration
        self.geometry = DomainGeometryModule()
        self.wave = WaveForwardModule(calibration.c_cfl, calibration.theta_min)
        self.fbi = FbiTransformModule()
        self.smallness = SmallnessPropagationModule(calibration)
        self.harness = StabilityHarnessModule(self.geometry, self.wave, calibration)
        self.outputs = []
        self.handlers = {
            "solve": self.run_solve,
            "fbi-check": self.run_fbi_check,
            "three-sphere": self.run_three_sphere,
            "chain": self.run_chain,
            "stability": self.run_stability,
        }
        logger.info("Lab initialized for '%s'.", config.subcommand)

    # ------------------------------------------------------------------
    # Dispatch
    # ------------------------------------------------------------------

    def dispatch(self) -> tuple[int, dict]:
        """
        Runs the configured pipeline and writes the manifest.

        Returns:
            tuple: (exit status, manifest). Status is 0 on success and 1
            when a pipeline error was recorded.
        """
        config = self.config
        os.makedirs(config.output_dir, exist_ok=True)
        started = time.perf_counter()
        status, error = 0, None
        try:
            self.handlers[config.subcommand]()
        except WavescopeError as exc:
            logger.error("%s failed: [%s] %s %s", config.subcommand, exc.category, exc.message, exc.context)
            status, error = 1, exc.to_dict()
        manifest = {
            "config": config.to_dict(),
            "config_dir": os.path.abspath(config.base_dir),
            "defaulted_keys": sorted(config.defaulted_keys),
            "versions": {"wavescope": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "seed": config.seed,
            "wall_time_seconds": time.perf_counter() - started,
            "outputs": [{"file": os.path.relpath(path, config.output_dir), "sha256": artifacts.sha256_of(path)}
                        for path in self.outputs],
            "status": "ok" if status == 0 else "error",
            "error": error,
        }
        artifacts.write_json(artifacts.resolve_output_path(config.output_dir, "manifest.json"), manifest)
        return status, manifest

    def _output(self, name: str) -> str:
        path = artifacts.resolve_output_path(self.config.output_dir, name)
        self.outputs.append(path)
        return path

    def _array_output(self, name: str, array: np.ndarray, meta: dict) -> str:
        path = self._output(name)
        artifacts.write_array(path, array, meta)
        self.outputs.append(path + ".json")
        return path

    def _setup(self):
        config = self.config
        domain = build_domain(config, self.geometry)
        A = build_anisotropy(config.anisotropy, config.rho0, domain.dim)
        bdata = build_boundary_data(config.boundary_data, domain)
        return domain, A, bdata

    # ------------------------------------------------------------------
    # Pipelines
    # ------------------------------------------------------------------

    def run_solve(self) -> None:
        section = self.config.section
        domain, A, bdata = self._setup()
        T = float(section["T"])
        self.wave.check_boundary_data(bdata, T)
        u = self.wave.solve_ibvp(domain, A, bdata, T, self.config.grid_spec())
        artifacts.write_json(self._output("domain.json"), self.geometry.export_domain(domain))

        grid_meta = {"axes": [axis.tolist() for axis in u.grid.axes], "h": u.grid.h, "dt": u.dt}
        for t in section["snapshots"]:
            index = u.time_index(float(t))
            self._array_output(f"snapshot_t{index:06d}.bin", u.values[index],
                               dict(grid_meta, t=float(u.times[index])))

        count = int(section["energy_samples"])
        indices = np.unique(np.linspace(0, len(u.times) - 1, count).round().astype(int))
        rows = [{"t": float(u.times[k]), "energy": self.wave.energy(u, float(u.times[k]))} for k in indices]
        artifacts.write_csv(self._output("energy.csv"), ("t", "energy"), rows)

        if section["flux"] and domain.sigma is not None:
            trace = self.wave.boundary_flux(u, domain.sigma)
            self._array_output("flux.bin", trace.values, {"times": trace.times.tolist(),
                                                          "points": trace.points.tolist(),
                                                          "weights": trace.weights.tolist()})
        self._array_output("final_state.bin", u.values[-1], dict(grid_meta, t=u.T))

    def run_fbi_check(self) -> None:
        section = self.config.section
        domain, A, bdata = self._setup()
        T = float(section["T"])
        tau = float(section["tau"]) if section["tau"] is not None else T / 2.0
        y = np.asarray(section["y"], dtype=float)
        u = self.wave.solve_ibvp(domain, A, bdata, T, self.config.grid_spec())
        u_T, du_T = self.fbi.final_slices(u)

        rows = []
        U = None
        for mu in section["mu"]:
            mu = float(mu)
            U = self.fbi.fbi_transform(u, mu, tau, y)
            f = self.fbi.fbi_source(u_T, du_T, mu, tau, y, T)
            row = {
                "mu": mu,
                "tau": tau,
                "quadrature_nodes": U.quadrature_nodes,
                "residual": self.fbi.elliptic_residual(U, A, f),
                "residual_zero_source": self.fbi.elliptic_residual(U, A, np.zeros_like(f)),
            }
            if section["growth"]:
                report = self.fbi.fbi_growth_check(U, u)
                row.update({f"c_growth_{j}": c for j, c in enumerate(report.c_by_order)})
            rows.append(row)
            logger.info("FBI check mu=%g: residual %.4g (zero source %.4g).", mu, row["residual"],
                        row["residual_zero_source"])
        columns = ["mu", "tau", "quadrature_nodes", "residual", "residual_zero_source"]
        if section["growth"]:
            columns += ["c_growth_0", "c_growth_1", "c_growth_2"]
        artifacts.write_csv(self._output("fbi_check.csv"), columns, rows)

        meta = {"mu": U.mu, "tau": U.tau, "T": U.T, "y": U.y.tolist(), "h": u.grid.h}
        for part, values in (("real", U.values.real), ("imag", U.values.imag)):
            self._array_output(f"fbi_{part}.bin", values, dict(meta, part=part))

    def run_three_sphere(self) -> None:
        section = self.config.section
        r1, r2, r3 = (float(r) for r in section["radii"])
        beta = float(section["beta"]) if section["beta"] is not None else self.config.calibration.beta
        params = ThreeSphereParams(r1, r2, r3, float(section["delta"]), beta)
        corpus = self.smallness.harmonic_corpus(int(section["count"]), int(section["max_degree"]),
                                                int(section["dim"]), self.config.seed)
        records = [self.smallness.verify_three_sphere(field_, params, section["cap"]) for field_ in corpus]
        rows = [record.to_row() for record in records]
        columns = list(rows[0].keys()) if rows else ["field_id"]
        failed = sum(not record.passed for record in records)
        artifacts.write_csv(self._output("three_sphere.csv"), columns, rows,
                            footer_lines=[f"passed {len(records) - failed} of {len(records)}"])

    def run_chain(self) -> None:
        section = self.config.section
        rho0 = self.config.rho0
        if section["kind"] == "cone":
            varsigma = float(section["varsigma"])
            L_s = section["L_s"] if section["L_s"] is not None else self.geometry.cone_slope_for(varsigma)
            chain = self.geometry.cone_ball_chain(float(section["s"]), float(L_s), rho0, varsigma,
                                                  int(section["count"]))
            schedule = self.smallness.cone_decay_schedule(chain, float(section["mu"]), float(section["T"]), rho0)
            summary = {
                "theta_tilde0": schedule.theta_tilde0, "contraction": schedule.contraction,
                "A": schedule.A, "A1": schedule.A1, "A2": schedule.A2, "T_min": schedule.T_min,
                "delta3": schedule.delta3, "chain_d1": chain.cone.chain_d1,
            }
        elif section["kind"] == "path":
            domain = build_domain(self.config, self.geometry)
            r = float(section["r"]) if section["r"] is not None else rho0 / 4.0
            chain = self.geometry.path_ball_chain(domain, section["start"], section["end"], r)
            summary = {"length_bound": chain.length_bound, "within_length_bound": chain.within_length_bound}
        else:
            raise ValidationError(f"unknown chain kind '{section['kind']}'")

        state = self.smallness.propagate_smallness(chain, float(section["alpha0"]), float(section["theta_star"]),
                                                   float(section["C_step"]))
        rows = [{"k": k, "center": " ".join(artifacts.format_value(c) for c in chain.centers[k]),
                 "r": chain.small_radii[k], "rho": chain.mid_radii[k], "R": chain.large_radii[k],
                 "alpha": state.alpha[k] if k < len(state.alpha) else None}
                for k in range(len(chain))]
        artifacts.write_csv(self._output("chain.csv"), ("k", "center", "r", "rho", "R", "alpha"), rows)
        summary.update(kind=chain.kind, count=len(chain), alpha_final=state.final,
                       closed_form=state.closed_form, bound=state.bound)
        artifacts.write_json(self._output("chain_summary.json"),
                             {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                              for k, v in summary.items()})

    def run_stability(self) -> None:
        config = self.config
        section = config.section
        domain, A, bdata = self._setup()
        chart_id = section["chart_id"]
        if chart_id is None:
            hidden = [chart.chart_id for chart in domain.charts if not chart.accessible]
            if not hidden:
                raise InsufficientData("no inaccessible chart to perturb")
            chart_id = hidden[0]
        spec = StabilityExperiment(
            base=domain, anisotropy=A, boundary_data=bdata, T=float(section["T"]), grid=config.grid_spec(),
            chart_id=chart_id, amplitudes=[float(a) * config.rho0 for a in section["amplitudes"]],
            bump_center=section["bump_center"], bump_width=section["bump_width"],
            distance_resolution=section["distance_resolution"], t0=section["t0"], threads=config.threads,
            seed=config.seed, schedules=bool(section["schedules"]), label="rung")
        records = self.harness.run_stability_experiment(spec)
        path = self._output("stability.csv")
        self.harness.write_records(path, records, spec)
        if section["fit"]:
            # the CSV above stays in place when the fit fails
            fit = self.harness.fit_log_modulus(records, config.rho0)
            self.harness.append_fit(path, fit)
