"""EGN-style NLI prediction from (windowed) moments.

The SPM coefficient is affine in the moments,
    eta = k1 + (mu4 - 2) k2 + (mu6 - 9 mu4 + 12) k3,
and the same form (with its own coefficients) is used for XPM.  The three
coefficients are calibrated against split-step runs of three i.i.d.
reference formats whose moment vectors are linearly independent.
"""
import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import CalibrationFailed, InvalidInput

__all__ = [
    "KappaSet",
    "NliReport",
    "eta_from_moments",
    "solve_kappas",
    "fit_eta",
    "calibrate_kappas",
    "predict_snr",
    "optimal_power",
]

MAX_CONDITION = 1e6


@dataclass(frozen=True)
class KappaSet:
    kappa1: float
    kappa2: float
    kappa3: float
    scope: str = "SPM"
    link: dict = field(default_factory=dict)
    fingerprint: str = ""
    window: int = 1
    seeds: tuple = ()
    kappa_se: tuple = (math.nan, math.nan, math.nan)
    residuals: dict = field(default_factory=dict)

    @property
    def kappas(self):
        return np.array([self.kappa1, self.kappa2, self.kappa3])

    def to_csv(self):
        """Two-column key,value CSV; values are JSON literals."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["key", "value"])
        for k, v in asdict(self).items():
            if isinstance(v, tuple):
                v = list(v)
            wr.writerow([k, json.dumps(v, sort_keys=True)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["key", "value"]:
            raise InvalidInput("not a kappa record (missing key,value header)")
        d = {}
        for row in rows[1:]:
            if len(row) != 2:
                raise InvalidInput(f"malformed kappa record row: {row!r}")
            d[row[0]] = json.loads(row[1])
        d["seeds"] = tuple(d.get("seeds", ()))
        d["kappa_se"] = tuple(math.nan if x is None else x
                              for x in d.get("kappa_se", (math.nan,) * 3))
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidInput(f"bad kappa record: {exc}")


def _design_row(mu4, mu6):
    return np.array([1.0, mu4 - 2.0, mu6 - 9.0 * mu4 + 12.0])


def eta_from_moments(kappas, mu4, mu6):
    k = kappas.kappas if isinstance(kappas, KappaSet) else np.asarray(kappas, dtype=float)
    return float(k[0] + (mu4 - 2.0) * k[1] + (mu6 - 9.0 * mu4 + 12.0) * k[2])


def solve_kappas(moments, etas, eta_se=None):
    """Solve the 3x3 system eta_i = row(mu4_i, mu6_i) . kappa.

    Returns (kappa, kappa_se, condition number).  ``eta_se`` (optional)
    propagates per-format standard errors into the coefficients.
    """
    moments = list(moments)
    if len(moments) != 3 or len(etas) != 3:
        raise InvalidInput("exactly three reference formats are required")
    A = np.array([_design_row(m4, m6) for m4, m6 in moments])
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise CalibrationFailed(f"reference moment matrix is ill-conditioned (cond={cond:.3g})")
    kap = np.linalg.solve(A, np.asarray(etas, dtype=float))
    se = np.full(3, math.nan)
    if eta_se is not None:
        Ainv = np.linalg.inv(A)
        se = np.sqrt((Ainv**2) @ np.asarray(eta_se, dtype=float) ** 2)
    return kap, se, cond


def fit_eta(powers, p_nli):
    """Cube-law fit P_NLI = eta P^3 in the log domain.

    Returns (eta, rms log10 residual).
    """
    p = np.asarray(powers, dtype=float)
    n = np.asarray(p_nli, dtype=float)
    if np.any(n <= 0):
        raise CalibrationFailed("non-positive NLI power in cube-law fit")
    r = np.log(n / p**3)
    return float(np.exp(r.mean())), float(np.std(r / np.log(10)))


def _measure_eta(cfg, token, seed, launch_dbm, windows, stream_opts):
    from .formats import make_stream
    from .ssfm import run_experiment
    from .windowed import windowed_moments

    streams = [make_stream(token, cfg.n_symbols, seed * 1000 + k, **stream_opts)
               for k in range(cfg.N_ch)]
    cut = cfg.center_channel
    runs = run_experiment(cfg, streams, seed=seed, launch_dbm=launch_dbm, ase=False)
    eta, res = fit_eta([r.p_signal for r in runs], [r.p_nli for r in runs])
    mom = {w: windowed_moments(streams[cut], w) for w in windows}
    return eta, res, streams, mom


def calibrate_kappas(link, scope="SPM", seeds=(1,), launch_dbm=None, refs=None,
                     stream_opts=None, measure=None):
    """Fit (k1, k2, k3) for one link and scope from split-step runs.

    For every reference format and seed the NLI is measured noise-free over
    the launch sweep and reduced to eta by a cube-law fit; etas are averaged
    over seeds.  XPM scope runs the full WDM comb and subtracts the
    single-channel (SPM) eta of the same centre-channel stream.
    ``measure(cfg, token, seed) -> (eta, mu4, mu6)`` replaces the simulator
    (used by tests with synthetic data).
    """
    from .formats import REFERENCE_FORMATS
    from .windowed import WindowRule, optimal_windows

    scope = scope.upper()
    if scope not in ("SPM", "XPM"):
        raise InvalidInput("scope must be SPM or XPM")
    refs = tuple(refs or REFERENCE_FORMATS)
    stream_opts = dict(stream_opts or {})
    launch = tuple(link.launch_dbm if launch_dbm is None else launch_dbm)
    rule = WindowRule(link.R_sym, link.R_sym, link.beta2, link.L_span, link.N_span,
                      link.delta_f_abs / link.R_sym, link.N_ch)
    w_spm, w_xpm = optimal_windows(rule)
    w = w_spm if scope == "SPM" else w_xpm
    if scope == "XPM" and link.N_ch < 2:
        raise CalibrationFailed("XPM calibration needs more than one channel")

    if measure is None:
        single = link.with_(N_ch=1)

        def measure(cfg, token, seed):
            eta_spm, res, streams, mom = _measure_eta(single, token, seed, launch, [w], stream_opts)
            if scope == "SPM":
                m = mom[w]
                return eta_spm, m.mu4_bar, m.mu6_bar, res
            eta_all, res2, _, mom2 = _measure_eta(cfg, token, seed, launch, [w], stream_opts)
            m = mom2[w]
            return eta_all - eta_spm, m.mu4_bar, m.mu6_bar, max(res, res2)

    moments, etas, ses, resid = [], [], [], {}
    for token in refs:
        vals = [measure(link, token, s) for s in seeds]
        e = np.array([v[0] for v in vals])
        moments.append((float(np.mean([v[1] for v in vals])), float(np.mean([v[2] for v in vals]))))
        etas.append(float(e.mean()))
        ses.append(float(e.std(ddof=1) / math.sqrt(len(e))) if len(e) > 1 else math.nan)
        resid[token] = {
            "eta": etas[-1],
            "eta_se": ses[-1],
            "mu4": moments[-1][0],
            "mu6": moments[-1][1],
            "fit_rms_log10": float(max(v[3] for v in vals)) if len(vals[0]) > 3 else math.nan,
        }
    kap, se, cond = solve_kappas(moments, etas, ses if len(seeds) > 1 else None)
    if not kap[0] > 0:
        raise CalibrationFailed(f"calibrated kappa1 = {kap[0]:.3g} is not positive")
    resid["condition_number"] = cond
    return KappaSet(
        float(kap[0]), float(kap[1]), float(kap[2]),
        scope=scope,
        link={k: v for k, v in link.__dict__.items() if k != "launch_dbm"},
        fingerprint=link.fingerprint(),
        window=int(w),
        seeds=tuple(int(s) for s in seeds),
        kappa_se=tuple(float(x) for x in se),
        residuals=resid,
    )


@dataclass(frozen=True)
class NliReport:
    launch_power: float
    p_nli: float
    p_ase: float
    eta: float
    snr_eff: float

    @property
    def snr_eff_db(self):
        return 10.0 * math.log10(self.snr_eff)


def predict_snr(kappas_spm, kappas_xpm, moments_spm, moments_xpm, launch_power, p_ase):
    """Effective SNR from the EGN estimate of NLI plus a given ASE power.

    ``moments_*`` are (mu4, mu6) pairs; ``kappas_xpm`` may be None for a
    single-channel link.  All powers refer to the same channel/bandwidth.
    """
    eta = eta_from_moments(kappas_spm, *moments_spm)
    if kappas_xpm is not None:
        eta += eta_from_moments(kappas_xpm, *moments_xpm)
    p_nli = eta * launch_power**3
    noise = p_ase + p_nli
    snr = launch_power / noise if noise > 0 else math.inf
    return NliReport(float(launch_power), float(p_nli), float(p_ase), float(eta), float(snr))


def optimal_power(p_ase, eta):
    """Launch power maximizing P / (p_ase + eta P^3)."""
    return (p_ase / (2.0 * eta)) ** (1.0 / 3.0)
