from .reports import (
    SCHEMA_VERSION,
    CostReport,
    FinalityRecord,
    FinalityReport,
    SchemaMismatch,
    TpsReport,
    compare,
    format_units,
    reference_reports,
)
from .runner import BENCH_KEY, TpsChannel, run_deploy, run_tps, run_transfer
