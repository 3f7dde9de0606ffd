"""Field-file round trips, report JSON, matrix export/import."""

import json
import os

import numpy as np
import pytest
import scipy.linalg

import ym4.instanton as instanton
import ym4.secondvar as secondvar
import ym4.spectral as spectral
import ym4.store as store
from ym4.lattice import Grid


def grids_equal(a, b):
    return (
        a.half_width == b.half_width
        and a.n == b.n
        and np.array_equal(a.center, b.center)
    )


class TestFieldRoundTrip:
    def test_zero_oneform_bitwise(self, tmp_path):
        grid = Grid(1.0, 6)
        path = tmp_path / "zero.ymf"
        field = grid.zeros("oneform")
        store.write_field(path, grid, field)
        back = store.read_field(path)
        assert back.kind == "oneform"
        assert grids_equal(back.grid, grid)
        assert np.array_equal(back.values, field)
        assert back.values.dtype == np.float64

    @pytest.mark.parametrize("kind,extra", [("scalar", ()), ("oneform", (4,)), ("twoform", (6,))])
    def test_random_fields_bitwise(self, tmp_path, kind, extra):
        rng = np.random.default_rng(3)
        grid = Grid(0.8, 5, np.array([0.1, -0.2, 0.0, 0.3]))
        field = rng.standard_normal(grid.shape + extra + (3,))
        # include denormals and exact negative zeros in the payload
        field[(0,) * 4] = -0.0
        field.flat[1] = 5e-324
        path = tmp_path / f"{kind}.ymf"
        store.write_field(path, grid, field, kind=kind)
        back = store.read_field(path)
        assert back.kind == kind
        assert grids_equal(back.grid, grid)
        assert back.values.tobytes() == field.tobytes()

    def test_header_is_an_auditable_json_line(self, tmp_path):
        grid = Grid(1.0, 5)
        path = tmp_path / "f.ymf"
        store.write_field(path, grid, grid.zeros("scalar"))
        with open(path, "rb") as f:
            header = json.loads(f.readline().decode())
        assert header["magic"] == "YMF1"
        assert header["algebra"] == "su2"
        assert header["endianness"] == "LE"
        assert header["grid"]["N"] == 5

    def test_no_temp_files_left_behind(self, tmp_path):
        grid = Grid(1.0, 5)
        store.write_field(tmp_path / "a.ymf", grid, grid.zeros("scalar"))
        assert sorted(os.listdir(tmp_path)) == ["a.ymf"]


class TestFieldErrors:
    def test_corrupt_magic(self, tmp_path):
        grid = Grid(1.0, 5)
        path = tmp_path / "f.ymf"
        store.write_field(path, grid, grid.zeros("scalar"))
        raw = path.read_bytes().replace(b"YMF1", b"YMF9", 1)
        path.write_bytes(raw)
        with pytest.raises(store.FieldFormatError, match="magic"):
            store.read_field(path)

    def test_truncated_payload(self, tmp_path):
        grid = Grid(1.0, 5)
        path = tmp_path / "f.ymf"
        store.write_field(path, grid, grid.zeros("oneform"))
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(store.FieldFormatError, match="payload"):
            store.read_field(path)

    def test_rejects_nan_and_inf(self, tmp_path):
        grid = Grid(1.0, 5)
        field = grid.zeros("oneform")
        field[2, 2, 2, 2, 0, 0] = np.nan
        with pytest.raises(store.FieldFormatError, match="NaN"):
            store.write_field(tmp_path / "f.ymf", grid, field)
        field[2, 2, 2, 2, 0, 0] = np.inf
        with pytest.raises(store.FieldFormatError, match="NaN"):
            store.write_field(tmp_path / "f.ymf", grid, field)
        assert not os.path.exists(tmp_path / "f.ymf")

    def test_shape_kind_mismatch(self, tmp_path):
        grid = Grid(1.0, 5)
        with pytest.raises(store.FieldFormatError, match="kind"):
            store.write_field(tmp_path / "f.ymf", grid, grid.zeros("oneform"), kind="scalar")

    def test_unknown_kind_in_header(self, tmp_path):
        grid = Grid(1.0, 5)
        path = tmp_path / "f.ymf"
        store.write_field(path, grid, grid.zeros("scalar"))
        raw = path.read_bytes().replace(b'"scalar"', b'"spinor"', 1)
        path.write_bytes(raw)
        with pytest.raises(store.FieldFormatError, match="kind"):
            store.read_field(path)


class TestReports:
    def test_deterministic_without_meta(self, tmp_path):
        rep = {"kind": "demo", "value": np.float64(1.5), "flags": (True, False)}
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        store.write_report(a, rep, meta=False)
        store.write_report(b, rep, meta=False)
        assert a.read_bytes() == b.read_bytes()
        doc = json.loads(a.read_text())
        assert doc["schema"] == 1
        assert doc["kind"] == "demo"
        assert "meta" not in doc
        assert doc["report"]["value"] == 1.5

    def test_meta_carries_timestamp(self, tmp_path):
        path = tmp_path / "a.json"
        store.write_report(path, {"kind": "demo"}, meta=True)
        doc = json.loads(path.read_text())
        assert "created" in doc["meta"]

    def test_dataclass_report_serializes(self, tmp_path):
        grid = Grid(1.0, 6)
        A = instanton.bpst(grid, 1.0, np.zeros(4))
        P = secondvar.assemble(grid, A)
        rep = spectral.smallest_eigs(P, 4)
        doc = store.write_report(tmp_path / "spec.json", rep, meta=False)
        assert doc["kind"] == "spectral_report"
        loaded = json.loads((tmp_path / "spec.json").read_text())
        assert loaded["report"]["morse_index"] == rep.morse_index
        assert len(loaded["report"]["eigenvalues"]) == len(rep.eigenvalues)

    def test_table_full_precision(self, tmp_path):
        path = tmp_path / "t.csv"
        store.write_table(path, ["i", "x"], [[1, 1.0 / 3.0], [2, 2.0 ** -52]])
        lines = path.read_text().splitlines()
        assert lines[0] == "i,x"
        assert float(lines[1].split(",")[1]) == 1.0 / 3.0
        assert float(lines[2].split(",")[1]) == 2.0 ** -52


class TestMatrixExport:
    def test_pencil_reimport_reproduces_eigenvalues(self, tmp_path):
        grid = Grid(0.9, 5)
        A = instanton.bpst(grid, 1.2, np.zeros(4))
        P = secondvar.assemble(grid, A)
        store.export_matrix(tmp_path / "K.mtx", P.stiffness)
        store.export_matrix(tmp_path / "M.mtx", P.mass)
        K = store.import_matrix(tmp_path / "K.mtx")
        M = store.import_matrix(tmp_path / "M.mtx")
        w0 = scipy.linalg.eigh(
            P.stiffness.toarray(), P.mass.toarray(), eigvals_only=True
        )
        w1 = scipy.linalg.eigh(K.toarray(), M.toarray(), eigvals_only=True)
        scale = np.max(np.abs(w0))
        assert np.max(np.abs(w0 - w1)) <= 1e-12 * scale

    def test_header_line(self, tmp_path):
        m = np.array([[0.0, 2.0], [0.5, 0.0]])
        store.export_matrix(tmp_path / "m.mtx", m)
        lines = (tmp_path / "m.mtx").read_text().splitlines()
        assert lines[0] == "# 2 2 2"
        assert len(lines) == 3

    def test_malformed_header_rejected(self, tmp_path):
        (tmp_path / "bad.mtx").write_text("2 2 1\n0 1 5.0\n")
        with pytest.raises(store.FieldFormatError, match="header"):
            store.import_matrix(tmp_path / "bad.mtx")
