import json

import numpy as np
import pytest

from bnn_severity.report import (
    FoldResult,
    aggregate_folds,
    assemble_report,
    from_structured,
    read_report,
    render_table,
    report_from_table,
    to_structured,
    write_report,
)

FOLD_VALUES = {
    "hmc_bnn": [(12.42, 15.21), (14.95, 185.41), (11.49, 144.14), (14.36, 173.73), (7.65, 101.62)],
    "mc_dropout_bnn": [(17.29, 1198.36), (13.94, 1027.51), (13.40, 1030.63), (19.81, 708.82), (18.91, 775.49)],
    "nn": [(23.56, None), (24.94, None), (20.39, None), (81.21, None), (18.45, None)],
}


def aggregate_row(table):
    return next(line for line in table.splitlines() if line.startswith("1-5")).split()[1:]


class TestAggregates:
    def test_fold_means(self):
        table = render_table(report_from_table(FOLD_VALUES))
        assert aggregate_row(table) == ["12.17", "124.02", "16.67", "948.16", "33.71", "n.a."]

    def test_nn_smse_not_available_in_every_row(self):
        table = render_table(report_from_table(FOLD_VALUES))
        rows = [line.split() for line in table.splitlines() if line[:1].isdigit()]
        assert len(rows) == 6
        assert all(row[-1] == "n.a." for row in rows)

    def test_fold_rows_rendered_to_two_places(self):
        table = render_table(report_from_table(FOLD_VALUES))
        first = next(line for line in table.splitlines() if line.startswith("1 ")).split()
        assert first == ["1", "12.42", "15.21", "17.29", "1198.36", "23.56", "n.a."]

    def test_mean_is_arithmetic(self, rng):
        values = rng.uniform(0, 50, size=(5, 2))
        agg = aggregate_folds([FoldResult("hmc_bnn", i + 1, m, s) for i, (m, s) in enumerate(values)])
        np.testing.assert_allclose(agg["hmc_bnn"]["mse"], values[:, 0].mean(), rtol=1e-15)
        np.testing.assert_allclose(agg["hmc_bnn"]["smse"], values[:, 1].mean(), rtol=1e-15)

    def test_fold_order_independent(self):
        folds = report_from_table(FOLD_VALUES).folds
        shuffled = assemble_report(folds[::-1])
        assert to_structured(shuffled) == to_structured(assemble_report(folds))


class TestStructured:
    def test_round_trip_is_byte_identical(self, tmp_path):
        report = report_from_table(FOLD_VALUES, p_values=[{"a": "hmc_bnn", "b": "nn", "statistic": 3.0,
                                                         "p_value": 0.0625, "n": 5}],
                                   seeds=[0], config_hash="abc", settings={"grid": {"k": [1, 2]}})
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        write_report(report, first, "structured")
        write_report(read_report(first), second, "structured")
        assert first.read_bytes() == second.read_bytes()

    def test_required_keys(self):
        doc = json.loads(to_structured(report_from_table(FOLD_VALUES, seeds=[3], config_hash="h")))
        assert {"folds", "p_values", "seeds", "config_hash", "aggregate"} <= set(doc)
        assert {"family", "fold", "mse", "smse", "hyperparameters"} <= set(doc["folds"][0])
        assert doc["folds"][-1]["smse"] is None

    def test_parse_restores_values(self):
        report = report_from_table(FOLD_VALUES)
        back = from_structured(to_structured(report))
        assert [f.mse for f in back.folds] == [f.mse for f in report.folds]
        assert back.aggregate == report.aggregate


class TestWriteReport:
    def test_missing_directory(self, tmp_path):
        with pytest.raises(OSError):
            write_report(report_from_table(FOLD_VALUES), tmp_path / "nope" / "r.txt")
        assert not (tmp_path / "nope").exists()

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            write_report(report_from_table(FOLD_VALUES), tmp_path / "r", "yaml")
        assert list(tmp_path.iterdir()) == []

    def test_p_value_lines(self):
        report = report_from_table(FOLD_VALUES, p_values=[{"a": "hmc_bnn", "b": "nn", "statistic": 3.0,
                                                         "p_value": 0.0625, "n": 5}])
        assert render_table(report).splitlines()[-1] == "HMC BNN vs NN: W = 3.0, p = 0.0625"
