"""Batch driver: ``winkurt <command> --config FILE``.

Commands write CSV files into the output directory together with an
``effective_config.ini`` echo of the configuration actually used.
Exit status: 0 success, 2 configuration error, 3 numerical failure.
"""
import argparse
import csv
import io
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .alphabet import classical_moments
from .config import ExperimentConfig, load_config
from .egn import KappaSet, calibrate_kappas, fit_eta, predict_snr
from .errors import CalibrationFailed, ConfigError, InvalidParameter, WinkurtError
from .formats import codec_for, make_stream, parse_format
from .shaping import codec_summary_csv
from .ssfm import run_experiment, runs_to_csv, w_to_dbm
from .windowed import (WindowRule, moment_profile, optimal_window_lengths, optimal_windows,
                       windowed_moments)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _stream_opts(cfg):
    m = cfg.modulation
    return {"M": m.M, "H": m.H, "inner_cap": m.inner_cap}


def _channel_streams(cfg, token, seed):
    # same per-channel seeding as the calibration runs
    return [make_stream(token, cfg.link.n_symbols, seed * 1000 + k, **_stream_opts(cfg))
            for k in range(cfg.link.N_ch)]


def link_windows(link):
    rule = WindowRule(link.R_sym, link.R_sym, link.beta2, link.L_span, link.N_span,
                      link.delta_f_abs / link.R_sym, link.N_ch)
    return optimal_windows(rule)


def _fmt_float(x):
    return repr(float(x))


def _dbm(p):
    return f"{float(w_to_dbm(p)):.6f}" if p > 0 else "-inf"


def _write(out_dir, name, text):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def _map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# -- commands ----------------------------------------------------------------

def cmd_moments(cfg, threads=1):
    an = cfg.analysis
    jobs = [(tok, s) for tok in cfg.modulation.all_formats() for s in an.seeds]

    def one(job):
        tok, s = job
        st = make_stream(tok, an.moment_slots, s, **_stream_opts(cfg))
        return moment_profile(st, an.windows)

    written = []
    for (tok, s), prof in zip(jobs, _map(one, jobs, threads)):
        written.append(_write(an.out, f"moments_{tok}_seed{s}.csv", prof.to_csv()))
    return written


def windows_table(cfg):
    link, an = cfg.link, cfg.analysis
    spacing = link.delta_f_abs / link.R_sym
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["R_sym_gbd", "N_span", "N_ch", "delta_f_ghz", "w_spm_exact", "w_xpm_exact",
                 "w_spm", "w_xpm"])
    for R in an.window_rates:
        df_abs = R * spacing
        n_ch = max(1, int(round(an.total_bw / df_abs)))
        for ns in an.window_spans:
            rule = WindowRule(R, R, link.beta2, link.L_span, ns, spacing, n_ch)
            ws, wx = optimal_window_lengths(rule)
            iws, iwx = optimal_windows(rule)
            wr.writerow([f"{R / 1e9:g}", ns, n_ch, f"{df_abs / 1e9:.6g}",
                         f"{ws:.6f}", f"{wx:.6f}", iws, iwx])
    return buf.getvalue()


def cmd_windows(cfg, threads=1):
    return [_write(cfg.analysis.out, "windows.csv", windows_table(cfg))]


def cmd_shape_info(cfg, threads=1):
    m = cfg.modulation
    codecs = []
    for tok in m.all_formats():
        kind, n = parse_format(tok)
        if kind in ("ess1d", "ess4d"):
            codecs.append(codec_for(kind, m.M, n, m.H, m.inner_cap if kind == "ess4d" else None))
    if not codecs:
        raise ConfigError("shape-info needs at least one ess1d-<n> or ess4d-<n> format")
    return [_write(cfg.analysis.out, "shape_info.csv", codec_summary_csv(codecs))]


def calibrate(cfg, scope="SPM"):
    an = cfg.analysis
    return calibrate_kappas(cfg.link, scope=scope, seeds=an.calibration_seeds,
                            stream_opts=_stream_opts(cfg))


def cmd_calibrate(cfg, threads=1):
    scopes = ["SPM"] + (["XPM"] if cfg.link.N_ch > 1 else [])
    kaps = _map(lambda sc: calibrate(cfg, sc), scopes, threads)
    return [_write(cfg.analysis.out, f"kappa_{sc.lower()}.csv", k.to_csv())
            for sc, k in zip(scopes, kaps)]


def cmd_simulate(cfg, threads=1):
    an = cfg.analysis
    jobs = [(tok, s) for tok in cfg.modulation.all_formats() for s in an.seeds]

    def one(job):
        tok, s = job
        return run_experiment(cfg.link, _channel_streams(cfg, tok, s), seed=s, ase=an.ase,
                              nli_mode=an.nli_mode)

    parts = []
    for (tok, s), runs in zip(jobs, _map(one, jobs, threads)):
        text = runs_to_csv(runs, {"format": tok})
        parts.append(text if not parts else text.split("\n", 1)[1])
    return [_write(an.out, "simulate.csv", "".join(parts))]


# -- compare -----------------------------------------------------------------

def load_kappas(cfg, scope):
    path = cfg.analysis.kappa_spm if scope == "SPM" else cfg.analysis.kappa_xpm
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                kap = KappaSet.from_csv(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read kappa_{scope.lower()} record: {exc}")
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}")
        if kap.fingerprint and kap.fingerprint != cfg.link.fingerprint():
            raise ConfigError(
                f"{path} was calibrated on a different link (fingerprint {kap.fingerprint}, "
                f"this link {cfg.link.fingerprint()}); rerun `winkurt calibrate`")
        return kap
    if not cfg.analysis.auto_calibrate:
        key = f"kappa_{scope.lower()}"
        raise ConfigError(
            f"no calibrated {scope} coefficients: run `winkurt calibrate` with this config "
            f"and set analysis.{key} to the written kappa_{scope.lower()}.csv, "
            f"or set analysis.auto_calibrate = true")
    return calibrate(cfg, scope)


@dataclass
class FormatResult:
    token: str
    n: int
    seed: int
    runs: list
    mu_w1: tuple
    mu_spm: tuple
    mu_xpm: tuple
    eta_ss: float
    eta_w1: float
    eta_wopt: float
    rows: list = field(default_factory=list)
    best_db: dict = field(default_factory=dict)


@dataclass
class CompareResult:
    formats: list
    kappa_spm: KappaSet
    kappa_xpm: KappaSet
    w_spm: int
    w_xpm: int
    spearman_w1: float
    spearman_wopt: float
    max_dsnr_w1: float
    max_dsnr_wopt: float
    max_point_dsnr_w1: float
    max_point_dsnr_wopt: float

    def points_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["format", "n", "seed", "launch_dbm", "snr_ss_db", "snr_w1_db",
                     "snr_wopt_db", "dsnr_w1_db", "dsnr_wopt_db", "p_nli_ss_dbm",
                     "p_nli_w1_dbm", "p_nli_wopt_dbm", "p_ase_dbm"])
        for fr in self.formats:
            wr.writerows(fr.rows)
        return buf.getvalue()

    def summary_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["format", "n", "seed", "mu4_w1", "mu6_w1", "mu4_wopt", "mu6_wopt",
                     "eta_ss", "eta_w1", "eta_wopt", "best_snr_ss_db", "best_snr_w1_db",
                     "best_snr_wopt_db"])
        for fr in self.formats:
            wr.writerow([fr.token, fr.n if fr.n is not None else "", fr.seed,
                         *(_fmt_float(x) for x in (*fr.mu_w1, *fr.mu_spm, fr.eta_ss,
                                                   fr.eta_w1, fr.eta_wopt)),
                         *(f"{fr.best_db[k]:.6f}" for k in ("ss", "w1", "wopt"))])
        return buf.getvalue()

    def metrics_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["metric", "value"])
        for k in ("w_spm", "w_xpm", "spearman_w1", "spearman_wopt", "max_dsnr_w1",
                  "max_dsnr_wopt", "max_point_dsnr_w1", "max_point_dsnr_wopt"):
            v = getattr(self, k)
            wr.writerow([k, v if isinstance(v, int) else _fmt_float(v)])
        return buf.getvalue()


def _compare_format(cfg, token, seed, kap_spm, kap_xpm, w_spm, w_xpm):
    an, link = cfg.analysis, cfg.link
    streams = _channel_streams(cfg, token, seed)
    cut = streams[link.center_channel]
    runs = run_experiment(link, streams, seed=seed, ase=an.ase, nli_mode=an.nli_mode)
    cm = classical_moments(cut)
    mu_w1 = (cm.mu4, cm.mu6)
    ws = windowed_moments(cut, w_spm)
    wx = windowed_moments(cut, w_xpm)
    mu_spm, mu_xpm = (ws.mu4_bar, ws.mu6_bar), (wx.mu4_bar, wx.mu6_bar)
    eta_ss, _ = fit_eta([r.p_signal for r in runs], [max(r.p_nli, 1e-300) for r in runs])
    _, n = parse_format(token)
    rows = []
    etas = {}
    for name, m_spm, m_xpm in (("w1", mu_w1, mu_w1), ("wopt", mu_spm, mu_xpm)):
        preds = [predict_snr(kap_spm, kap_xpm, m_spm, m_xpm, r.p_signal, r.p_ase) for r in runs]
        etas[name] = preds[0].eta
        for i, p in enumerate(preds):
            if name == "w1":
                rows.append([p])
            else:
                rows[i].append(p)
    out = []
    for r, (p1, pw) in zip(runs, rows):
        ss = r.snr_eff_db
        out.append([token, n if n is not None else "", seed, f"{r.launch_dbm:g}",
                    f"{ss:.6f}", f"{p1.snr_eff_db:.6f}", f"{pw.snr_eff_db:.6f}",
                    f"{p1.snr_eff_db - ss:.6f}", f"{pw.snr_eff_db - ss:.6f}",
                    _dbm(r.p_nli), _dbm(p1.p_nli), _dbm(pw.p_nli), _dbm(r.p_ase)])
    best = {"ss": max(r.snr_eff_db for r in runs),
            "w1": max(p1.snr_eff_db for p1, _ in rows),
            "wopt": max(pw.snr_eff_db for _, pw in rows)}
    return FormatResult(token, n, seed, runs, mu_w1, mu_spm, mu_xpm, eta_ss,
                        etas["w1"], etas["wopt"], out, best)


def run_compare(cfg, threads=1, kappa_spm=None, kappa_xpm=None):
    """Split-step versus EGN (w = 1 and optimal w) over formats and launches."""
    link = cfg.link
    kap_spm = kappa_spm or load_kappas(cfg, "SPM")
    kap_xpm = None
    if link.N_ch > 1:
        kap_xpm = kappa_xpm or load_kappas(cfg, "XPM")
    w_spm, w_xpm = link_windows(link)
    jobs = [(tok, s) for tok in cfg.modulation.all_formats() for s in cfg.analysis.seeds]
    results = _map(lambda j: _compare_format(cfg, j[0], j[1], kap_spm, kap_xpm, w_spm, w_xpm),
                   jobs, threads)
    ss = [fr.eta_ss for fr in results]
    if len(results) > 1:
        sp1 = float(spearmanr(ss, [fr.eta_w1 for fr in results]).statistic)
        spw = float(spearmanr(ss, [fr.eta_wopt for fr in results]).statistic)
    else:
        sp1 = spw = math.nan
    # optimum-launch SNR of each curve over the common sweep
    b1 = [abs(fr.best_db["w1"] - fr.best_db["ss"]) for fr in results]
    bw = [abs(fr.best_db["wopt"] - fr.best_db["ss"]) for fr in results]
    d1 = [abs(float(row[7])) for fr in results for row in fr.rows]
    dw = [abs(float(row[8])) for fr in results for row in fr.rows]
    if not np.all(np.isfinite(b1 + bw + d1 + dw)):
        raise FloatingPointError("non-finite SNR difference in comparison")
    return CompareResult(results, kap_spm, kap_xpm, w_spm, w_xpm, sp1, spw, max(b1), max(bw),
                         max(d1), max(dw))


def cmd_compare(cfg, threads=1):
    res = run_compare(cfg, threads)
    out = cfg.analysis.out
    written = [
        _write(out, "compare.csv", res.points_csv()),
        _write(out, "compare_summary.csv", res.summary_csv()),
        _write(out, "compare_metrics.csv", res.metrics_csv()),
        _write(out, "kappa_spm_used.csv", res.kappa_spm.to_csv()),
    ]
    if res.kappa_xpm is not None:
        written.append(_write(out, "kappa_xpm_used.csv", res.kappa_xpm.to_csv()))
    return written


COMMANDS = {
    "moments": cmd_moments,
    "windows": cmd_windows,
    "shape-info": cmd_shape_info,
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="winkurt", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", metavar="PATH", help="INI experiment file (defaults if omitted)")
    ap.add_argument("--seed", type=int, help="override the first analysis seed")
    ap.add_argument("--out", metavar="DIR", help="output directory (overrides analysis.out)")
    ap.add_argument("--threads", type=int, default=1, help="independent runs in parallel")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = cfg.with_overrides(seed=args.seed, out=args.out)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        _write(cfg.analysis.out, "effective_config.ini", cfg.to_text())
        for path in COMMANDS[args.command](cfg, threads=args.threads):
            print(path)
    except (ConfigError, InvalidParameter) as exc:
        print(f"winkurt: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CalibrationFailed, WinkurtError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"winkurt: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
