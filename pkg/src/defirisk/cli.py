"""Command-line surface for the pricing and risk engine.

Subcommands: fit-frequency, fit-severity, price, simulate, gof, summarize.
Every command is a pure function of (input files, config, seed): reruns
with the same inputs produce byte-identical output files, and the
``--workers`` flag never changes results, only wall time.

Stream allocation (all derived from --seed): protocol quotes use streams
10, 11, ...; the simulate command owns stream 1000 and its children.

Exit codes: 0 success, 2 configuration/schema error, 3 numerical failure;
errors are emitted as a JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import frequency, glm, pricing, severity, tailrisk
from .datamodel import (
    Chain,
    IngestResult,
    IssueType,
    Month,
    Portfolio,
    build_monthly_panel,
    derive_loss_ratio,
    effective_tvl,
    load_incidents,
    load_portfolio,
    load_tvl,
)
from .dependence import build_copula
from .errors import ConfigError, EngineError, NoEventError
from .numerics import RngStream, std_normal_quantile

_PRICE_STREAM_BASE = 10
_SIMULATE_STREAM = 1000

_CONFIG_KEYS = {
    "incidents",
    "tvl",
    "portfolio",
    "models",
    "output",
    "seed",
    "samples",
    "theta",
    "levels",
    "format",
    "workers",
    "dependence",
    "window_end",
    "bootstrap",
    "override",
    "model",
}


@dataclass
class RunConfig:
    """Resolved run configuration (defaults < config file < CLI flags)."""

    incidents: Path | None = None
    tvl: Path | None = None
    portfolio: Path | None = None
    models: Path | None = None
    output: Path = Path("out")
    seed: int = 0
    n_samples: int = 100_000
    theta: float | None = None
    levels: tuple[float, ...] = (0.90, 0.95, 0.99)
    output_format: str = "csv"
    workers: int = 1
    dependence: str = "both"
    window_end: Month | None = None
    bootstrap: int = 200
    override: Path | None = None
    model: Path | None = None

    def validate(self, needs: tuple[str, ...]) -> None:
        if self.n_samples < 10_000:
            raise ConfigError(f"samples must be at least 10^4, got {self.n_samples}")
        if self.theta is not None and not self.theta > 0.0:
            raise ConfigError(f"theta must be positive, got {self.theta}")
        if any(not (0.0 < q < 1.0) for q in self.levels):
            raise ConfigError(f"levels must lie strictly in (0, 1), got {self.levels}")
        if self.output_format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.output_format}")
        if self.dependence not in ("on", "off", "both"):
            raise ConfigError(f"dependence must be on/off/both, got {self.dependence}")
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if self.bootstrap < 2:
            raise ConfigError(f"bootstrap must be at least 2, got {self.bootstrap}")
        for name in needs:
            value = getattr(self, name)
            if value is None:
                raise ConfigError(f"missing required path --{name.replace('_', '-')}")
            if not Path(value).exists():
                raise ConfigError(f"{name} path does not exist: {value}")


def _load_config_file(path: Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid config JSON: {exc}") from exc
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    return doc


def _parse_levels(raw) -> tuple[float, ...]:
    if isinstance(raw, (list, tuple)):
        return tuple(float(v) for v in raw)
    try:
        return tuple(float(part) for part in str(raw).split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"bad levels {raw!r}") from exc


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        doc = _load_config_file(Path(args.config))
        mapping = {
            "incidents": ("incidents", Path),
            "tvl": ("tvl", Path),
            "portfolio": ("portfolio", Path),
            "models": ("models", Path),
            "output": ("output", Path),
            "seed": ("seed", int),
            "samples": ("n_samples", int),
            "theta": ("theta", float),
            "format": ("output_format", str),
            "workers": ("workers", int),
            "dependence": ("dependence", str),
            "bootstrap": ("bootstrap", int),
            "override": ("override", Path),
            "model": ("model", Path),
        }
        for key, (attr, cast) in mapping.items():
            if key in doc and doc[key] is not None:
                setattr(cfg, attr, cast(doc[key]))
        if doc.get("levels") is not None:
            cfg.levels = _parse_levels(doc["levels"])
        if doc.get("window_end") is not None:
            cfg.window_end = Month.parse(str(doc["window_end"]))
    for attr, flag in (
        ("incidents", "incidents"),
        ("tvl", "tvl"),
        ("portfolio", "portfolio"),
        ("models", "models"),
        ("override", "override"),
        ("model", "model"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, attr, Path(value))
    if args.output is not None:
        cfg.output = Path(args.output)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.samples is not None:
        cfg.n_samples = args.samples
    if args.theta is not None:
        cfg.theta = args.theta
    if args.levels is not None:
        cfg.levels = _parse_levels(args.levels)
    if args.format is not None:
        cfg.output_format = args.format
    if args.workers is not None:
        cfg.workers = args.workers
    if getattr(args, "dependence", None) is not None:
        cfg.dependence = args.dependence
    if getattr(args, "bootstrap", None) is not None:
        cfg.bootstrap = args.bootstrap
    if getattr(args, "window_end", None) is not None:
        cfg.window_end = Month.parse(args.window_end)
    return cfg


# ---------------------------------------------------------------------------
# deterministic writers


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))  # shortest round-trip form, numpy scalars included
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _rows_to_json(header: list[str], rows: list[list]) -> list[dict]:
    return [dict(zip(header, row)) for row in rows]


def _emit_table(cfg: RunConfig, stem: str, header: list[str], rows: list[list]) -> Path:
    cfg.output.mkdir(parents=True, exist_ok=True)
    if cfg.output_format == "csv":
        path = cfg.output / f"{stem}.csv"
        _write_csv(path, header, rows)
    else:
        path = cfg.output / f"{stem}.json"
        _write_json(path, _rows_to_json(header, rows))
    return path


# ---------------------------------------------------------------------------
# shared data assembly


def _latest_tvl(tvl_obs, protocol_id: str) -> tuple[Month, float]:
    series = [(obs.month, obs.tvl_usd) for obs in tvl_obs if obs.protocol_id == protocol_id]
    if not series:
        raise ConfigError(f"no TVL observations for protocol {protocol_id!r}")
    return max(series, key=lambda pair: pair[0])


def _ingest_report_payload(result: IngestResult) -> dict:
    return {
        "rows_total": result.total_rows,
        "rows_accepted": len(result.records),
        "rows_rejected": len(result.rejected),
        "rows_flagged": len(result.flagged),
        "rejected": [
            {"line": r.line, "row": list(r.raw), "reason": r.reason} for r in result.rejected
        ],
        "flagged": [
            {"line": r.line, "row": list(r.raw), "reason": r.reason} for r in result.flagged
        ],
    }


def _build_panels(cfg: RunConfig, portfolio: Portfolio, incidents, tvl_obs):
    panels = {}
    for proto in portfolio.protocols:
        window_end = cfg.window_end or _latest_tvl(tvl_obs, proto.id)[0]
        panels[proto.id] = build_monthly_panel(incidents, tvl_obs, proto, window_end)
    return panels


def _prediction_point(cfg: RunConfig, tvl_obs, protocol_id: str) -> tuple[float, Month]:
    """TVL snapshot feeding predictions and the month being predicted."""
    month, value = _latest_tvl(tvl_obs, protocol_id)
    if cfg.window_end is not None:
        by_month = {
            obs.month: obs.tvl_usd for obs in tvl_obs if obs.protocol_id == protocol_id
        }
        if cfg.window_end in by_month:
            month, value = cfg.window_end, by_month[cfg.window_end]
    return value, month.plus(1)


# ---------------------------------------------------------------------------
# commands


def cmd_fit_frequency(cfg: RunConfig) -> list[Path]:
    cfg.validate(needs=("incidents", "tvl", "portfolio"))
    ingest = load_incidents(cfg.incidents)
    tvl_obs = load_tvl(cfg.tvl)
    portfolio = load_portfolio(cfg.portfolio)
    panels = _build_panels(cfg, portfolio, ingest.records, tvl_obs)

    cfg.output.mkdir(parents=True, exist_ok=True)
    written = []
    models: dict[str, frequency.FrequencyModel] = {}
    for proto in portfolio.protocols:
        try:
            models[proto.id] = frequency.fit_frequency(panels[proto.id])
        except NoEventError:
            pass  # reported below through the peer-interval path

    header = [
        "protocol_id",
        "alpha0",
        "alpha1",
        "se_alpha0",
        "se_alpha1",
        "penalized",
        "hl_p",
        "prediction_tvl",
        "attack_prob",
        "interval_low",
        "interval_high",
        "note",
    ]
    rows = []
    for proto in portfolio.protocols:
        tvl_next, _ = _prediction_point(cfg, tvl_obs, proto.id)
        if proto.id in models:
            model = models[proto.id]
            path = cfg.output / f"freq_{proto.id}.json"
            _write_json(path, frequency.to_dict(model))
            written.append(path)
            fit = model.fit
            rows.append(
                [
                    proto.id,
                    float(fit.coefficients[0]),
                    float(fit.coefficients[1]),
                    None if math.isnan(fit.standard_errors[0]) else float(fit.standard_errors[0]),
                    None if math.isnan(fit.standard_errors[1]) else float(fit.standard_errors[1]),
                    int(fit.penalty is not None),
                    None if model.hl is None else model.hl.p_value,
                    tvl_next,
                    frequency.predict_attack_probability(model, tvl_next),
                    None,
                    None,
                    "covariate_dropped" if model.covariate_dropped else "",
                ]
            )
        else:
            peer_panels = [panels[pid] for pid in models]
            try:
                lo, hi = frequency.peer_interval(peer_panels, tvl_next)
                note = "no events: peer interval"
            except EngineError:
                lo = hi = None
                note = "no events anywhere: interval unavailable"
            rows.append(
                [proto.id, None, None, None, None, None, None, tvl_next, None, lo, hi, note]
            )

    written.append(_emit_table(cfg, "frequency_report", header, rows))
    report_path = cfg.output / "ingest_report.json"
    _write_json(report_path, _ingest_report_payload(ingest))
    written.append(report_path)
    return written


def cmd_fit_severity(cfg: RunConfig) -> list[Path]:
    cfg.validate(needs=("incidents",))
    ingest = load_incidents(cfg.incidents)
    model = severity.fit_severity(ingest.records)
    cfg.output.mkdir(parents=True, exist_ok=True)
    written = []

    model_path = cfg.output / "severity_model.json"
    _write_json(model_path, severity.to_dict(model))
    written.append(model_path)

    # Plot-ready diagnostics are always CSV regardless of --format.
    ratios_rows = []
    resid_design = []
    resid_values = []
    index = 0
    for rec in ingest.records:
        m = Month.of(rec.date)
        if not (model.training_window[0] <= m <= model.training_window[1]):
            continue
        if rec.loss_usd == 0.0:
            continue
        ratio = derive_loss_ratio(rec)
        ratios_rows.append([index, rec.protocol_id, rec.date.isoformat(), float(ratio)])
        if ratio < 1.0:
            resid_design.append([1.0, math.log(effective_tvl(rec))])
            resid_values.append(ratio)
        index += 1
    ratios_path = cfg.output / "loss_ratios.csv"
    _write_csv(ratios_path, ["index", "protocol_id", "date", "ratio"], ratios_rows)
    written.append(ratios_path)

    if model.proportional_fit is not None and resid_values:
        resid = glm.quantile_residuals(
            model.proportional_fit, np.array(resid_design), np.array(resid_values)
        )
        order = np.argsort(resid, kind="stable")
        n = len(resid)
        qq_rows = [
            [k, std_normal_quantile((k + 0.5) / n), float(resid[order[k]])]
            for k in range(n)
        ]
        qq_path = cfg.output / "quantile_residuals.csv"
        _write_csv(qq_path, ["index", "theoretical_quantile", "sample_quantile"], qq_rows)
        written.append(qq_path)

    if model.low_partial_warning:
        print(
            f"warning: only {model.n_partial} partial-loss observations "
            f"(fewer than {severity.MIN_PARTIAL_OBS}); proportional-loss fit is weakly identified",
            file=sys.stderr,
        )

    report_path = cfg.output / "ingest_report.json"
    _write_json(report_path, _ingest_report_payload(ingest))
    written.append(report_path)
    return written


def _load_frequency_models(cfg: RunConfig, portfolio: Portfolio):
    models_dir = cfg.models or cfg.output
    models = {}
    for proto in portfolio.protocols:
        path = Path(models_dir) / f"freq_{proto.id}.json"
        if not path.exists():
            raise ConfigError(f"missing frequency model for protocol {proto.id!r}: {path}")
        with open(path, encoding="utf-8") as fh:
            models[proto.id] = frequency.from_dict(json.load(fh))
    return models


def _load_severity_model(cfg: RunConfig) -> severity.SeverityModel:
    models_dir = cfg.models or cfg.output
    path = Path(models_dir) / "severity_model.json"
    if not path.exists():
        raise ConfigError(f"missing severity model file: {path}")
    with open(path, encoding="utf-8") as fh:
        return severity.from_dict(json.load(fh))


_QUOTE_HEADER = [
    "protocol_id",
    "attack_prob",
    "loss_pct",
    "expectation_usd",
    "expectation_pct",
    "sd_usd",
    "sd_pct",
    "theta",
    "n_samples",
    "seed",
]


def cmd_price(cfg: RunConfig) -> list[Path]:
    if cfg.override is not None:
        return _price_from_override(cfg)
    cfg.validate(needs=("tvl", "portfolio"))
    portfolio = load_portfolio(cfg.portfolio)
    tvl_obs = load_tvl(cfg.tvl)
    freq_models = _load_frequency_models(cfg, portfolio)
    sev_model = _load_severity_model(cfg)
    theta = cfg.theta if cfg.theta is not None else portfolio.loading_theta

    rows = []
    for i, proto in enumerate(portfolio.protocols):
        tvl_next, pred_month = _prediction_point(cfg, tvl_obs, proto.id)
        quote = pricing.price(
            proto,
            tvl_next,
            pred_month.first_day(),
            freq_models[proto.id],
            sev_model,
            theta=theta,
            n_samples=cfg.n_samples,
            rng=RngStream(cfg.seed, _PRICE_STREAM_BASE + i),
        )
        rows.append(
            [
                quote.protocol_id,
                quote.attack_prob,
                quote.loss_pct,
                quote.expectation_premium_usd,
                quote.expectation_premium_pct,
                quote.sd_premium_usd,
                quote.sd_premium_pct,
                quote.theta,
                quote.mc_meta.n_samples,
                quote.mc_meta.seed,
            ]
        )
    return [_emit_table(cfg, "quotes", _QUOTE_HEADER, rows)]


def _price_from_override(cfg: RunConfig) -> list[Path]:
    """Quotes from externally supplied (attack_prob, loss_pct) pairs.

    Lets published probability/loss-percentage pairs be priced without the
    training data.  SD-principle columns need a second_moment_pct entry
    per protocol and stay empty otherwise.
    """
    cfg.validate(needs=("override",))
    with open(cfg.override, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{cfg.override}: invalid JSON: {exc}") from exc
    theta = cfg.theta if cfg.theta is not None else pricing.DEFAULT_THETA
    if cfg.portfolio is not None and Path(cfg.portfolio).exists():
        portfolio = load_portfolio(cfg.portfolio)
        order = [p.id for p in portfolio.protocols]
        if cfg.theta is None:
            theta = portfolio.loading_theta
    else:
        order = list(doc.keys())

    rows = []
    for pid in order:
        if pid not in doc:
            raise ConfigError(f"override file has no entry for protocol {pid!r}")
        entry = doc[pid]
        try:
            attack_prob = float(entry["attack_prob"])
            loss_pct = float(entry["loss_pct"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"override entry for {pid!r} needs attack_prob and loss_pct") from exc
        tvl = float(entry.get("tvl", 1.0))
        e_l = pricing.expected_loss(attack_prob, tvl, 0.0, loss_pct)
        expectation_usd = (1.0 + theta) * e_l
        sd_usd = sd_pct = None
        if "second_moment_pct" in entry:
            e_y2 = tvl * tvl * float(entry["second_moment_pct"])
            var = attack_prob * e_y2 - (e_l) ** 2
            sd_usd = e_l + theta * math.sqrt(max(var, 0.0))
            sd_pct = sd_usd / tvl
        rows.append(
            [
                pid,
                attack_prob,
                loss_pct,
                expectation_usd,
                expectation_usd / tvl,
                sd_usd,
                sd_pct,
                theta,
                0,
                cfg.seed,
            ]
        )
    return [_emit_table(cfg, "quotes", _QUOTE_HEADER, rows)]


_RISK_COLUMNS = {
    "on": ["var_dep", "cte_dep", "var_dep_pct", "cte_dep_pct", "se_var_dep", "se_cte_dep"],
    "off": [
        "var_indep",
        "cte_indep",
        "var_indep_pct",
        "cte_indep_pct",
        "se_var_indep",
        "se_cte_indep",
    ],
    "both": [
        "var_dep",
        "var_indep",
        "cte_dep",
        "cte_indep",
        "var_dep_pct",
        "var_indep_pct",
        "cte_dep_pct",
        "cte_indep_pct",
        "se_var_dep",
        "se_var_indep",
        "se_cte_dep",
        "se_cte_indep",
    ],
}


def cmd_simulate(cfg: RunConfig) -> list[Path]:
    cfg.validate(needs=("tvl", "portfolio"))
    portfolio = load_portfolio(cfg.portfolio)
    tvl_obs = load_tvl(cfg.tvl)
    freq_models = _load_frequency_models(cfg, portfolio)
    sev_model = _load_severity_model(cfg)
    copula = build_copula(portfolio.similarity)

    tvls = {}
    when = None
    for proto in portfolio.protocols:
        tvl_next, pred_month = _prediction_point(cfg, tvl_obs, proto.id)
        tvls[proto.id] = tvl_next
        when = pred_month.first_day() if when is None else max(when, pred_month.first_day())

    report = tailrisk.risk_report(
        portfolio,
        freq_models,
        sev_model,
        copula,
        tvls,
        when,
        levels=cfg.levels,
        n_sims=cfg.n_samples,
        rng=RngStream(cfg.seed, _SIMULATE_STREAM),
        workers=cfg.workers,
        bootstrap_resamples=cfg.bootstrap,
    )
    columns = _RISK_COLUMNS[cfg.dependence]
    header = ["level"] + columns
    rows = [[row.level] + [getattr(row, c) for c in columns] for row in report.rows]
    paths = [_emit_table(cfg, "risk_report", header, rows)]
    meta_path = cfg.output / "risk_report_meta.json"
    _write_json(
        meta_path,
        {
            "n_sims": report.n_sims,
            "seed": report.seed,
            "base_stream": report.base_stream,
            "bootstrap_resamples": report.bootstrap_resamples,
            "total_tvl": report.total_tvl,
            "repaired_similarity": copula.repaired,
            "frobenius_shift": copula.frobenius_shift,
            "degenerate_tail": list(report.degenerate_tail),
            "dependence": cfg.dependence,
            "workers_independent": True,
        },
    )
    paths.append(meta_path)
    return paths


def _severity_designs(model: severity.SeverityModel, records):
    """Design matrices/responses for both severity parts over the model's window."""
    rows1, y1, rows2, y2 = [], [], [], []
    for rec in records:
        m = Month.of(rec.date)
        if not (model.training_window[0] <= m <= model.training_window[1]):
            continue
        if rec.loss_usd == 0.0:
            continue
        ratio = derive_loss_ratio(rec)
        log_tvl = math.log(effective_tvl(rec))
        t = severity.years_since(model.time_origin, rec.date)
        rows1.append(severity.total_loss_row(rec.chain, log_tvl, t))
        y1.append(1.0 if ratio == 1.0 else 0.0)
        if ratio < 1.0:
            rows2.append([1.0, log_tvl])
            y2.append(ratio)
    return (
        np.array(rows1, dtype=float).reshape(len(rows1), 7),
        np.array(y1, dtype=float),
        np.array(rows2, dtype=float).reshape(len(rows2), 2),
        np.array(y2, dtype=float),
    )


def cmd_gof(cfg: RunConfig) -> list[Path]:
    cfg.validate(needs=("model", "incidents"))
    with open(cfg.model, encoding="utf-8") as fh:
        doc = json.load(fh)
    cfg.output.mkdir(parents=True, exist_ok=True)
    written = []
    if "alpha0" in doc:
        cfg.validate(needs=("tvl", "portfolio"))
        model = frequency.from_dict(doc)
        portfolio = load_portfolio(cfg.portfolio)
        matches = [p for p in portfolio.protocols if p.id == model.protocol_id]
        if not matches:
            raise ConfigError(f"portfolio has no protocol {model.protocol_id!r}")
        ingest = load_incidents(cfg.incidents)
        tvl_obs = load_tvl(cfg.tvl)
        panel = build_monthly_panel(
            ingest.records, tvl_obs, matches[0], model.training_window[1]
        )
        y = np.array([row.event for row in panel], dtype=float)
        design = np.column_stack([np.ones(len(panel)), [row.log_tvl for row in panel]])
        hl = glm.hosmer_lemeshow(model.fit, design, y)
        payload = {
            "model": "frequency",
            "protocol_id": model.protocol_id,
            "hl": {
                "stat": hl.statistic,
                "df": hl.df,
                "p": hl.p_value,
                "groups": hl.groups_used,
            },
        }
    elif "beta" in doc or "gamma" in doc:
        model = severity.from_dict(doc)
        ingest = load_incidents(cfg.incidents)
        design1, response1, design2, response2 = _severity_designs(model, ingest.records)
        hl = None
        if model.total_loss_fit is not None and len(response1):
            hl = glm.hosmer_lemeshow(model.total_loss_fit, design1, response1)
        payload = {
            "model": "severity",
            "n_total": int(response1.sum()) if len(response1) else 0,
            "n_partial": len(response2),
            "hl": None
            if hl is None
            else {"stat": hl.statistic, "df": hl.df, "p": hl.p_value, "groups": hl.groups_used},
        }
        if model.proportional_fit is not None and len(response2):
            resid = glm.quantile_residuals(model.proportional_fit, design2, response2)
            resid = np.sort(resid, kind="stable")
            n = len(resid)
            qq_rows = [
                [k, std_normal_quantile((k + 0.5) / n), float(resid[k])] for k in range(n)
            ]
            qq_path = cfg.output / "gof_quantile_residuals.csv"
            _write_csv(qq_path, ["index", "theoretical_quantile", "sample_quantile"], qq_rows)
            written.append(qq_path)
    else:
        raise ConfigError(f"{cfg.model}: unrecognized model file")
    out = cfg.output / "gof.json"
    _write_json(out, payload)
    written.append(out)
    return written


def cmd_summarize(cfg: RunConfig) -> list[Path]:
    cfg.validate(needs=("incidents",))
    ingest = load_incidents(cfg.incidents)
    records = ingest.records
    rows: list[list] = []
    if not records:
        rows.append(["notice", "", "empty", 0])
        return [_emit_table(cfg, "summary", ["section", "key", "metric", "value"], rows)]

    years = sorted({rec.date.year for rec in records})
    for year in years:
        rows.append(
            ["events_by_year", str(year), "count", sum(1 for r in records if r.date.year == year)]
        )
    for issue in IssueType:
        rows.append(
            [
                "events_by_issue_type",
                issue.value,
                "count",
                sum(1 for r in records if r.issue_type is issue),
            ]
        )
    for chain in Chain:
        rows.append(
            ["events_by_chain", chain.value, "count", sum(1 for r in records if r.chain is chain)]
        )

    def _stats(values: list[float]) -> list[tuple[str, float | None]]:
        arr = np.asarray(values, dtype=float)
        sd = float(arr.std(ddof=1)) if arr.size > 1 else None
        return [
            ("count", int(arr.size)),
            ("median", float(np.median(arr))),
            ("mean", float(arr.mean())),
            ("sd", sd),
        ]

    losses = [rec.loss_usd for rec in records]
    for metric, value in _stats(losses):
        rows.append(["severity_usd", "all", metric, value])

    positive = [rec for rec in records if rec.loss_usd > 0.0]
    for chain in Chain:
        vals = [math.log(rec.loss_usd) for rec in positive if rec.chain is chain]
        if vals:
            for metric, value in _stats(vals):
                rows.append(["log_severity_by_chain", chain.value, metric, value])
    for year in years:
        vals = [math.log(rec.loss_usd) for rec in positive if rec.date.year == year]
        if vals:
            for metric, value in _stats(vals):
                rows.append(["log_severity_by_year", str(year), metric, value])

    return [_emit_table(cfg, "summary", ["section", "key", "metric", "value"], rows)]


# ---------------------------------------------------------------------------
# entry point


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--seed", type=int, help="base RNG seed (u64)")
    parser.add_argument("--samples", type=int, help="Monte Carlo samples / simulation paths")
    parser.add_argument("--theta", type=float, help="premium loading")
    parser.add_argument("--levels", help="comma-separated confidence levels")
    parser.add_argument("--format", choices=("csv", "json"), help="report format")
    parser.add_argument("--workers", type=int, help="simulation worker threads")
    parser.add_argument("--output", help="output directory")
    parser.add_argument("--incidents", help="incidents CSV path")
    parser.add_argument("--tvl", help="monthly TVL CSV path")
    parser.add_argument("--portfolio", help="portfolio JSON path")
    parser.add_argument("--models", help="directory holding fitted model files")


_COMMANDS = {
    "fit-frequency": cmd_fit_frequency,
    "fit-severity": cmd_fit_severity,
    "price": cmd_price,
    "simulate": cmd_simulate,
    "gof": cmd_gof,
    "summarize": cmd_summarize,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="defirisk",
        description="Frequency-severity pricing and tail-risk engine for protocol portfolios",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        _add_common_flags(p)
        if name == "fit-frequency":
            p.add_argument("--window-end", dest="window_end", help="training window end YYYY-MM")
        if name == "price":
            p.add_argument("--override", help="JSON of (attack_prob, loss_pct) pairs to price")
        if name == "simulate":
            p.add_argument("--dependence", choices=("on", "off", "both"))
            p.add_argument("--bootstrap", type=int, help="bootstrap resamples for SEs")
        if name == "gof":
            p.add_argument("--model", help="fitted model JSON to diagnose")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        written = _COMMANDS[args.command](cfg)
        for path in written:
            print(f"wrote {path}")
        return 0
    except EngineError as exc:
        payload = {"error": {"type": type(exc).__name__, "message": str(exc), "code": exc.code}}
        print(json.dumps(payload), file=sys.stderr)
        return exc.code
    except OSError as exc:
        payload = {"error": {"type": type(exc).__name__, "message": str(exc), "code": 2}}
        print(json.dumps(payload), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
