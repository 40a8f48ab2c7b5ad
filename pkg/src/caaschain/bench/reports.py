"""Benchmark report records.

Money is integer wei throughout; conversion to token units happens only when
formatting.  Reports serialize as one JSON object per line.
"""
from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from typing import Dict, Iterable, List, Optional

SCHEMA_VERSION = 1
WEI_PER_TOKEN = 10**18


class SchemaMismatch(ValueError):
    pass


def format_units(wei: int, decimals: int = 18) -> str:
    """Exact decimal rendering of an integer amount, e.g. 21000 gwei -> '0.000021'."""
    sign = "-" if wei < 0 else ""
    whole, frac = divmod(abs(wei), 10**decimals)
    if not frac:
        return f"{sign}{whole}"
    return f"{sign}{whole}.{str(frac).rjust(decimals, '0').rstrip('0')}"


def parse_units(text: str, decimals: int = 18) -> int:
    whole, _, frac = text.strip().partition(".")
    if len(frac) > decimals:
        raise ValueError(f"{text} has more than {decimals} decimals")
    sign = -1 if whole.startswith("-") else 1
    return sign * (abs(int(whole or "0")) * 10**decimals + int(frac.ljust(decimals, "0") or "0"))


@dataclass
class CostReport:
    """Cost of one transaction.

    ``fee_gas`` excludes the creation and data terms when they are itemized,
    so ``cost_total`` is always the plain sum of the money fields.
    """

    kind: str  # transfer | deploy | call
    tx_hash: str = ""
    gas_used: int = 0
    gas_price: int = 0
    cost_transaction: int = 0
    fee_gas: int = 0
    fee_dlt: int = 0
    fee_dlt_wei: int = 0
    cost_create_contract: int = 0
    cost_data: int = 0
    create_gas: int = 0
    data_gas: int = 0
    fees_total: int = 0
    cost_total: int = 0
    status: int = 1
    contract_address: Optional[str] = None
    schema_version: int = SCHEMA_VERSION
    record: str = "cost"

    MONEY = ("cost_transaction", "fee_gas", "fee_dlt_wei", "cost_create_contract", "cost_data")

    @classmethod
    def build(cls, kind: str, *, gas_used: int, gas_price: int, value: int, fee_dlt: int,
              wei_per_fee_unit: Fraction, create_gas: int = 0, data_gas: int = 0, **extra) -> "CostReport":
        fee_dlt_wei = int(fee_dlt * Fraction(wei_per_fee_unit))
        cost_create = create_gas * gas_price
        cost_data = data_gas * gas_price
        fee_gas = gas_used * gas_price - cost_create - cost_data
        report = cls(kind, gas_used=gas_used, gas_price=gas_price, cost_transaction=value, fee_gas=fee_gas,
                     fee_dlt=fee_dlt, fee_dlt_wei=fee_dlt_wei, cost_create_contract=cost_create,
                     cost_data=cost_data, create_gas=create_gas, data_gas=data_gas, **extra)
        report.fees_total = fee_gas + fee_dlt_wei + cost_create + cost_data
        report.cost_total = value + report.fees_total
        return report

    def check(self) -> List[str]:
        problems = []
        if self.cost_total != sum(getattr(self, f) for f in self.MONEY):
            problems.append("cost_total is not the sum of its components")
        if self.fees_total != self.cost_total - self.cost_transaction:
            problems.append("fees_total does not match the fee components")
        if self.kind == "deploy" and self.gas_used < 21000 + self.create_gas + self.data_gas:
            problems.append("deployment used less than base + creation + data gas")
        if self.cost_create_contract != self.create_gas * self.gas_price:
            problems.append("creation term is not create_gas * gas_price")
        return problems


@dataclass
class FinalityRecord:
    tx_hash: str
    generate_send_ns: int
    onedlt_finality_ns: int
    update_wallet_ns: int
    overall_ns: int

    @classmethod
    def from_points(cls, tx_hash: str, t0: int, t1: int, t2: int, t3: int) -> "FinalityRecord":
        """Durations between four instants; the three parts sum to the whole by construction."""
        return cls(tx_hash, t1 - t0, t2 - t1, t3 - t2, t3 - t0)

    @property
    def consistent(self) -> bool:
        return self.overall_ns == self.generate_send_ns + self.onedlt_finality_ns + self.update_wallet_ns


def _summary(values: List[int]) -> Dict[str, float]:
    if not values:
        return {"mean_s": 0.0, "median_s": 0.0, "p95_s": 0.0}
    ordered = sorted(values)
    p95 = ordered[min(len(ordered) - 1, int(round(0.95 * (len(ordered) - 1))))]
    return {"mean_s": statistics.fmean(values) / 1e9, "median_s": statistics.median(values) / 1e9,
            "p95_s": p95 / 1e9}


@dataclass
class FinalityReport:
    records: List[FinalityRecord] = field(default_factory=list)
    latency_ms: Optional[float] = None
    schema_version: int = SCHEMA_VERSION
    record: str = "finality"

    def aggregate(self) -> Dict[str, Dict[str, float]]:
        return {
            "generate_send": _summary([r.generate_send_ns for r in self.records]),
            "onedlt_finality": _summary([r.onedlt_finality_ns for r in self.records]),
            "update_wallet": _summary([r.update_wallet_ns for r in self.records]),
            "overall": _summary([r.overall_ns for r in self.records]),
        }

    def check(self) -> List[str]:
        bad = [r.tx_hash for r in self.records if not r.consistent]
        return [f"{len(bad)} records whose parts do not sum to overall_time"] if bad else []


@dataclass
class ChannelStats:
    network_id: str
    submitted: int = 0
    confirmed: int = 0
    receipts: int = 0
    duplicates: int = 0
    sequence_ordered: bool = True


@dataclass
class TpsReport:
    channels: int
    total: int
    span_ns: int = 0
    tps: float = 0.0
    completeness: int = 0
    per_channel: List[ChannelStats] = field(default_factory=list)
    failed: bool = False
    schema_version: int = SCHEMA_VERSION
    record: str = "tps"

    def check(self) -> List[str]:
        problems = []
        if self.completeness != self.total:
            problems.append(f"only {self.completeness}/{self.total} transactions confirmed")
        for ch in self.per_channel:
            if not (ch.submitted == ch.confirmed == ch.receipts):
                problems.append(f"{ch.network_id}: submitted {ch.submitted}, confirmed {ch.confirmed}, "
                                f"receipts {ch.receipts}")
            if ch.duplicates:
                problems.append(f"{ch.network_id}: {ch.duplicates} duplicate executions")
            if not ch.sequence_ordered:
                problems.append(f"{ch.network_id}: sequence numbers not strictly increasing")
        return problems


# serialization


def to_record(report) -> dict:
    body = asdict(report)
    if isinstance(report, FinalityReport):
        body["aggregate"] = report.aggregate()
    return body


def from_record(body: dict):
    body = dict(body)
    kind = body.get("record")
    body.pop("aggregate", None)
    if kind == "cost":
        return CostReport(**body)
    if kind == "finality":
        body["records"] = [FinalityRecord(**r) for r in body.get("records", [])]
        return FinalityReport(**body)
    if kind == "tps":
        body["per_channel"] = [ChannelStats(**c) for c in body.get("per_channel", [])]
        return TpsReport(**body)
    raise SchemaMismatch(f"unknown record type {kind!r}")


def dump_lines(reports: Iterable) -> str:
    return "".join(json.dumps(to_record(r), sort_keys=True) + "\n" for r in reports)


def load_lines(text: str) -> list:
    return [from_record(json.loads(line)) for line in text.splitlines() if line.strip()]


# comparison


@dataclass
class DeltaRow:
    name: str
    a: object
    b: object
    delta: object
    ratio: Optional[Fraction]


def _numeric_fields(report) -> Dict[str, object]:
    out = {}
    for f in fields(report):
        value = getattr(report, f.name)
        if f.name in ("schema_version",) or isinstance(value, bool):
            continue
        if isinstance(value, (int, float)):
            out[f.name] = value
    if isinstance(report, FinalityReport):
        for part, summary in report.aggregate().items():
            for stat, value in summary.items():
                out[f"{part}.{stat}"] = value
    return out


def compare(a, b) -> List[DeltaRow]:
    """Component deltas (b - a) and ratios (a / b) for two reports of the same shape."""
    if getattr(a, "schema_version", None) != getattr(b, "schema_version", None):
        raise SchemaMismatch(f"schema versions differ: {a.schema_version} vs {b.schema_version}")
    if type(a) is not type(b):
        raise SchemaMismatch(f"cannot compare {type(a).__name__} with {type(b).__name__}")
    fa, fb = _numeric_fields(a), _numeric_fields(b)
    rows = []
    for name in fa:
        if name not in fb:
            continue
        va, vb = fa[name], fb[name]
        if isinstance(va, int) and isinstance(vb, int):
            ratio = Fraction(va, vb) if vb else None
        else:
            ratio = Fraction(va) / Fraction(vb) if vb else None
        rows.append(DeltaRow(name, va, vb, vb - va, ratio))
    return rows


def format_compare(rows: List[DeltaRow], label_a: str = "A", label_b: str = "B") -> str:
    lines = [f"{'field':<28}{label_a:>24}{label_b:>24}{'delta (B-A)':>24}{'A/B':>12}"]
    for row in rows:
        ratio = f"{float(row.ratio):.4g}" if row.ratio is not None else "-"
        lines.append(f"{row.name:<28}{str(row.a):>24}{str(row.b):>24}{str(row.delta):>24}{ratio:>12}")
    return "\n".join(lines)


# published reference points, for side-by-side comparison with local runs

GWEI = 10**9


def reference_reports() -> Dict[str, CostReport]:
    """Transfer and deployment costs reported for the token network and for Ethereum."""
    onedlt = CostReport.build("transfer", gas_used=21000, gas_price=GWEI, value=1000 * WEI_PER_TOKEN,
                              fee_dlt=51779, wei_per_fee_unit=Fraction(30_000_000_000, 51779))

    def fees_only(kind: str, total: str) -> CostReport:
        wei = parse_units(total)
        return CostReport(kind, fees_total=wei, cost_total=wei, fee_gas=wei)

    return {
        "onedlt-transfer": onedlt,
        "ropsten-transfer": fees_only("transfer", "0.00005093"),
        "mainnet-transfer": fees_only("transfer", "0.000819"),
        "onedlt-deploy": fees_only("deploy", "0.000013402"),
        "ropsten-deploy": fees_only("deploy", "0.0015402"),
        "mainnet-deploy": fees_only("deploy", "0.0117055"),
    }


def cost_table(report: CostReport) -> str:
    rows = [("gas_used", str(report.gas_used)), ("gas_price (wei)", str(report.gas_price))]
    for name in ("cost_transaction", "fee_gas", "fee_dlt_wei", "cost_create_contract", "cost_data",
                 "fees_total", "cost_total"):
        rows.append((name, format_units(getattr(report, name))))
    rows.append(("fee_dlt (backend units)", str(report.fee_dlt)))
    width = max(len(n) for n, _ in rows)
    return "\n".join(f"{n:<{width}}  {v}" for n, v in rows)


def finality_table(report: FinalityReport) -> str:
    lines = [f"{'component':<18}{'mean s':>10}{'median s':>10}{'p95 s':>10}"]
    for part, s in report.aggregate().items():
        lines.append(f"{part:<18}{s['mean_s']:>10.4f}{s['median_s']:>10.4f}{s['p95_s']:>10.4f}")
    return "\n".join(lines)


def tps_table(report: TpsReport) -> str:
    lines = [f"channels {report.channels}  total {report.total}  confirmed {report.completeness}  "
             f"span {report.span_ns / 1e9:.3f}s  tps {report.tps:.1f}"]
    for ch in report.per_channel:
        lines.append(f"  {ch.network_id:<10} submitted {ch.submitted:>6} confirmed {ch.confirmed:>6} "
                     f"receipts {ch.receipts:>6} ordered {'yes' if ch.sequence_ordered else 'NO'}")
    return "\n".join(lines)
