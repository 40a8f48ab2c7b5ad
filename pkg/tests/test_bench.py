import json
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from caaschain.bench import cli
from caaschain.bench.reports import (CostReport, FinalityRecord, FinalityReport, SchemaMismatch, TpsReport, compare,
                                     dump_lines, format_units, load_lines, parse_units, reference_reports)
from caaschain.bench.runner import (BENCH_KEY, DeploymentReverted, StackUnreachable, TpsChannel, bench_genesis, run_deploy, run_tps,
                                    run_transfer)
from caaschain.caas.service import DEFAULT_WEI_PER_TINYBAR
from caaschain.rpc.client import LocalRpcClient
from caaschain.stack import BackgroundStack
from caaschain.types import GWEI

from conftest import arun, config, spawn

EMPTY_RUNTIME_10 = bytes.fromhex("5b60015060018003" "80f3")
REVERTING = bytes.fromhex("600080fd")


def bench_stack(n=1, **kw):
    configs = [config(f"net-{i + 1}", genesis=bench_genesis(), block_interval=0.5, **kw) for i in range(n)]
    return spawn(*configs)


def with_stack(fn, n=1, **kw):
    async def go():
        stack = await bench_stack(n, **kw)
        try:
            return await fn(stack, [LocalRpcClient(h.rpc) for h in stack.nodes.values()])
        finally:
            await stack.close()
    return arun(go())


def test_units_are_exact():
    assert format_units(21000 * GWEI) == "0.000021"
    assert parse_units("0.00002103") == 21030 * GWEI
    assert format_units(-5) == "-0.000000000000000005"
    assert parse_units(format_units(123456789)) == 123456789
    with pytest.raises(ValueError):
        parse_units("0." + "1" * 19)


@given(gas=st.integers(21000, 10**7), price=st.integers(0, 10**12), value=st.integers(0, 10**24),
       fee=st.integers(0, 10**6), create=st.booleans(), data_gas=st.integers(0, 10**5))
def test_cost_components_resum(gas, price, value, fee, create, data_gas):
    kw = {"create_gas": 32000, "data_gas": data_gas} if create else {}
    if create:
        gas = max(gas, 53000 + data_gas)
    report = CostReport.build("deploy" if create else "transfer", gas_used=gas, gas_price=price, value=value,
                              fee_dlt=fee, wei_per_fee_unit=DEFAULT_WEI_PER_TINYBAR, **kw)
    assert report.check() == []
    assert report.cost_total == sum(getattr(report, f) for f in CostReport.MONEY)
    assert report.fee_gas + report.cost_create_contract + report.cost_data == gas * price
    (back,) = load_lines(dump_lines([report]))
    assert back == report


def test_transfer_fee_reference():
    ref = reference_reports()["onedlt-transfer"]
    assert format_units(ref.fee_gas) == "0.000021"
    assert format_units(ref.fee_dlt_wei) == "0.00000003"
    assert format_units(ref.fees_total) == "0.00002103"
    mainnet = reference_reports()["mainnet-transfer"]
    (row,) = [r for r in compare(mainnet, ref) if r.name == "fees_total"]
    assert round(float(row.ratio), 1) == 38.9


def test_zero_price_transfer_costs_only_value():
    report = CostReport.build("transfer", gas_used=21000, gas_price=0, value=77, fee_dlt=0,
                              wei_per_fee_unit=DEFAULT_WEI_PER_TINYBAR)
    assert report.fee_gas == 0 and report.cost_total == 77


def test_finality_records_sum_by_construction():
    r = FinalityRecord.from_points("0x1", 10, 25, 1000, 1300)
    assert (r.generate_send_ns, r.onedlt_finality_ns, r.update_wallet_ns, r.overall_ns) == (15, 975, 300, 1290)
    assert r.consistent
    report = FinalityReport([r, FinalityRecord("0x2", 1, 1, 1, 4)])
    assert report.check() == ["1 records whose parts do not sum to overall_time"]


def test_compare_and_schema():
    a = reference_reports()["onedlt-transfer"]
    assert all(row.delta == 0 for row in compare(a, a))
    b = CostReport.build("transfer", gas_used=21000, gas_price=GWEI, value=0, fee_dlt=0, wei_per_fee_unit=Fraction(1))
    b.schema_version = 2
    with pytest.raises(SchemaMismatch):
        compare(a, b)
    with pytest.raises(SchemaMismatch):
        compare(a, TpsReport(1, 1))
    with pytest.raises(SchemaMismatch):
        load_lines(json.dumps({"record": "mystery"}))


def test_run_transfer_live():
    async def body(stack, rpcs):
        costs, finality = await run_transfer(rpcs[0], count=3, wallet_poll=0.02)
        for c in costs:
            assert c.gas_used == 21000 and c.fee_gas == 21000 * GWEI
            assert c.fee_dlt == 51779 and c.fee_dlt_wei == 30 * GWEI
            assert format_units(c.fees_total) == "0.00002103"
            assert c.check() == []
        assert finality.check() == [] and len(finality.records) == 3
        assert all(r.onedlt_finality_ns >= 0 and r.update_wallet_ns >= 0 for r in finality.records)
        back = load_lines(dump_lines(costs + [finality]))
        assert back[-1].records == finality.records
    with_stack(body)


def test_run_transfer_zero_price():
    async def body(stack, rpcs):
        costs, _ = await run_transfer(rpcs[0], gas_price=0, value=5, wallet_poll=0.02)
        assert costs[0].fee_gas == 0
        assert costs[0].cost_total == 5 + costs[0].fee_dlt_wei
    with_stack(body, gas_price_floor=0)


def test_run_deploy_decomposition():
    async def body(stack, rpcs):
        empty = await run_deploy(rpcs[0], b"")
        assert empty.gas_used == 53000
        assert empty.cost_create_contract == 32000 * GWEI and empty.create_gas == 32000
        assert empty.check() == []
        ten = await run_deploy(rpcs[0], EMPTY_RUNTIME_10)
        assert ten.data_gas == 160 and ten.cost_data == 160 * GWEI
        assert ten.gas_used >= 21000 + 32000 + 160
        assert ten.check() == []
        with pytest.raises(DeploymentReverted) as err:
            await run_deploy(rpcs[0], REVERTING)
        assert err.value.report.status == 0
    with_stack(body)


def test_run_tps_small():
    async def body(stack, rpcs):
        channels = [TpsChannel(nid, rpc, BENCH_KEY, h.node) for (nid, h), rpc in zip(stack.nodes.items(), rpcs)]
        report = await run_tps(channels, 100, timeout=60)
        assert report.check() == [] and not report.failed
        assert report.completeness == 100
        assert [c.submitted for c in report.per_channel] == [34, 33, 33]
        single = await run_tps(channels[:1], 100, timeout=60)
        assert single.per_channel[0].sequence_ordered and single.completeness == 100
    with_stack(body, n=3)


def test_run_tps_over_rpc_only():
    async def body(stack, rpcs):
        channels = [TpsChannel(nid, rpc) for nid, rpc in zip(stack.nodes, rpcs)]
        report = await run_tps(channels, 40, timeout=60)
        assert report.completeness == 40 and report.check() == []
    with_stack(body, n=2)


def test_cli_transfer_deploy_compare(tmp_path, capsys):
    out = tmp_path / "transfer.jsonl"
    assert cli.main(["--transport", "in-process", "--block-interval", "0.2", "--out", str(out), "transfer"]) == 0
    records = load_lines(out.read_text())
    assert records[0].record == "cost" and records[0].fee_gas == 21000 * GWEI
    assert records[1].record == "finality"
    code = tmp_path / "init.hex"
    code.write_text("0x")
    assert cli.main(["--transport", "in-process", "deploy", "--bytecode", str(code)]) == 0
    (deploy,) = load_lines(capsys.readouterr().out)
    assert deploy.gas_used == 53000
    code.write_text(REVERTING.hex())
    assert cli.main(["--transport", "in-process", "deploy", "--bytecode", str(code)]) == 1
    capsys.readouterr()
    assert cli.main(["compare", "--report", str(out), "--report", "ref:onedlt-transfer", "--record", "cost"]) == 0
    table = capsys.readouterr().out
    assert "fee_gas" in table and "cost_total" in table
    assert cli.main(["compare", "--report", "ref:onedlt-transfer"]) == 2


def test_cli_tps(capsys):
    assert cli.main(["tps", "--channels", "2", "--total", "60"]) == 0
    (report,) = load_lines(capsys.readouterr().out)
    assert report.completeness == 60 and report.tps > 0


def test_cli_attach_mode(capsys):
    with BackgroundStack([config(genesis=bench_genesis(), block_interval=0.2)], transport="http") as bg:
        url = bg.stack.nodes["net-1"].rpc_url
        assert cli.main(["--stack", "attach", "--rpc-url", url, "transfer", "--count", "2"]) == 0
    records = load_lines(capsys.readouterr().out)
    assert [r.record for r in records] == ["cost", "cost", "finality"]
    assert all(r.fee_gas == 21000 * GWEI for r in records[:2])

    with pytest.raises(SystemExit):
        cli.main(["--stack", "attach", "--rpc-url", url, "tps", "--channels", "2", "--total", "4"])


def test_cli_attach_unreachable():
    with pytest.raises(StackUnreachable):
        cli.main(["--stack", "attach", "--rpc-url", "http://127.0.0.1:9", "transfer"])
