import json
import struct

import numpy as np
import pytest

from dve.closedset import ProbeWeights
from dve.core import SegmentRecord
from dve.distill import StudentParams
from dve.errors import (
    BadMagic,
    BadSchema,
    BadVersion,
    DimMismatch,
    DuplicateSegment,
    TruncatedPayload,
    UnknownDtype,
)
from dve.map3d import EmbeddingMap3D
from dve.storage import (
    EmbeddingBank,
    file_info,
    load_embedding_bank,
    load_probe,
    load_scan_manifest,
    load_student_params,
    read_label_map,
    read_map3d,
    read_mask_map,
    read_segment_records,
    read_volume,
    save_embedding_bank,
    save_probe,
    save_student_params,
    similarity_to_pgm,
    write_label_map,
    write_map3d,
    write_mask_map,
    write_segment_records,
    write_volume,
)


@pytest.fixture
def rng():
    return np.random.default_rng(101)


class TestVolumeFormat:
    def test_f32_round_trip_bit_exact(self, tmp_path, rng):
        volume = rng.standard_normal((3, 4, 8)).astype(np.float32).astype(np.float64)
        path = tmp_path / "v.dvem"
        write_volume(volume, path, dtype="f32")
        back = read_volume(path)
        np.testing.assert_array_equal(back, volume)

    def test_rewrite_is_byte_identical(self, tmp_path, rng):
        volume = rng.standard_normal((2, 5, 3)).astype(np.float32).astype(np.float64)
        p1, p2 = tmp_path / "a.dvem", tmp_path / "b.dvem"
        write_volume(volume, p1, dtype="f32")
        write_volume(read_volume(p1), p2, dtype="f32")
        assert p1.read_bytes() == p2.read_bytes()

    def test_f16_exactly_representable_value(self, tmp_path):
        volume = np.full((1, 1, 4), 1.0)
        path = tmp_path / "v.dvem"
        write_volume(volume, path, dtype="f16")
        np.testing.assert_array_equal(read_volume(path), volume)

    def test_f16_rounds_to_nearest_even(self, tmp_path):
        # halfway between adjacent halves 1.0 and 1.0009765625
        value = 1.00048828125
        path = tmp_path / "v.dvem"
        write_volume(np.full((1, 1, 1), value), path, dtype="f16")
        assert read_volume(path)[0, 0, 0] == 1.0

    def test_f16_reread_is_stable(self, tmp_path, rng):
        volume = rng.standard_normal((2, 3, 5))
        p1, p2 = tmp_path / "a.dvem", tmp_path / "b.dvem"
        write_volume(volume, p1, dtype="f16")
        write_volume(read_volume(p1), p2, dtype="f16")
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "v.dvem"
        write_volume(np.ones((1, 1, 2)), path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"DVEX"
        path.write_bytes(bytes(blob))
        with pytest.raises(BadMagic):
            read_volume(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "v.dvem"
        write_volume(np.ones((1, 1, 2)), path)
        blob = bytearray(path.read_bytes())
        blob[4:8] = struct.pack("<I", 9)
        path.write_bytes(bytes(blob))
        with pytest.raises(BadVersion):
            read_volume(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "v.dvem"
        write_volume(np.ones((2, 2, 2)), path)
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(TruncatedPayload):
            read_volume(path)

    def test_oversized_payload_rejected(self, tmp_path):
        path = tmp_path / "v.dvem"
        write_volume(np.ones((2, 2, 2)), path)
        path.write_bytes(path.read_bytes() + b"\x00\x00")
        with pytest.raises(TruncatedPayload):
            read_volume(path)

    def test_unknown_dtype_code(self, tmp_path):
        path = tmp_path / "v.dvem"
        write_volume(np.ones((1, 1, 2)), path)
        blob = bytearray(path.read_bytes())
        blob[20] = 7  # dtype byte sits at offset 20
        path.write_bytes(bytes(blob))
        with pytest.raises(UnknownDtype):
            read_volume(path)

    def test_unknown_dtype_name_on_write(self, tmp_path):
        with pytest.raises(UnknownDtype):
            write_volume(np.ones((1, 1, 2)), tmp_path / "v.dvem", dtype="f64")


class TestMaskAndLabelFormats:
    def test_mask_payload_layout(self, tmp_path):
        path = tmp_path / "m.smsk"
        write_mask_map(np.array([[1, 1], [0, 2]], dtype=np.uint16), path)
        blob = path.read_bytes()
        assert blob[:4] == b"SMSK"
        assert struct.unpack_from("<II", blob, 8) == (2, 2)
        assert np.frombuffer(blob, dtype="<u2", offset=16).tolist() == [1, 1, 0, 2]
        np.testing.assert_array_equal(read_mask_map(path), [[1, 1], [0, 2]])

    def test_truncated_after_header(self, tmp_path):
        path = tmp_path / "m.smsk"
        path.write_bytes(struct.pack("<4sIII", b"SMSK", 1, 2, 2))
        with pytest.raises(TruncatedPayload):
            read_mask_map(path)

    def test_all_zero_mask_valid(self, tmp_path):
        path = tmp_path / "m.smsk"
        write_mask_map(np.zeros((3, 3), dtype=np.uint16), path)
        assert not read_mask_map(path).any()

    def test_label_map_round_trip_with_ignore(self, tmp_path):
        labels = np.array([[0, 0xFFFF], [3, 1]], dtype=np.uint16)
        path = tmp_path / "l.lmap"
        write_label_map(labels, path)
        np.testing.assert_array_equal(read_label_map(path), labels)
        assert path.read_bytes()[:4] == b"LMAP"

    def test_mask_magic_rejected_for_labels(self, tmp_path):
        path = tmp_path / "m.smsk"
        write_mask_map(np.zeros((1, 1), dtype=np.uint16), path)
        with pytest.raises(BadMagic):
            read_label_map(path)


class TestSegmentRecordFormat:
    def test_round_trip_with_global_record(self, tmp_path, rng):
        records = {
            0: SegmentRecord(0, None, rng.standard_normal(4).astype(np.float32).astype(np.float64)),
            1: SegmentRecord(1, 7, rng.standard_normal(4).astype(np.float32).astype(np.float64)),
        }
        path = tmp_path / "r.sege"
        write_segment_records(records, path)
        back = read_segment_records(path)
        assert set(back) == {0, 1}
        assert back[0].class_id is None
        assert back[1].class_id == 7
        np.testing.assert_array_equal(back[0].raw_embedding, records[0].raw_embedding)
        np.testing.assert_array_equal(back[1].raw_embedding, records[1].raw_embedding)

    def test_rewrite_is_byte_identical(self, tmp_path, rng):
        records = {
            i: SegmentRecord(i, i, rng.standard_normal(3).astype(np.float32).astype(np.float64))
            for i in range(1, 5)
        }
        p1, p2 = tmp_path / "a.sege", tmp_path / "b.sege"
        write_segment_records(records, p1)
        write_segment_records(read_segment_records(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_duplicate_segment_id(self, tmp_path):
        vec = struct.pack("<2f", 1.0, 0.0)
        blob = struct.pack("<4sIII", b"SEGE", 1, 2, 2)
        blob += struct.pack("<HH", 5, 0) + vec
        blob += struct.pack("<HH", 5, 1) + vec
        path = tmp_path / "dup.sege"
        path.write_bytes(blob)
        with pytest.raises(DuplicateSegment):
            read_segment_records(path)

    def test_empty_record_set_valid(self, tmp_path):
        path = tmp_path / "e.sege"
        write_segment_records({}, path)
        assert read_segment_records(path) == {}

    def test_truncated_records(self, tmp_path):
        blob = struct.pack("<4sIII", b"SEGE", 1, 2, 2)
        blob += struct.pack("<HH", 1, 0) + struct.pack("<2f", 1.0, 0.0)
        path = tmp_path / "t.sege"
        path.write_bytes(blob)
        with pytest.raises(TruncatedPayload):
            read_segment_records(path)


class TestMap3DFormat:
    def test_round_trip(self, tmp_path, rng):
        cells = {}
        for _ in range(5):
            key = tuple(int(k) for k in rng.integers(-8, 8, 3))
            vec = rng.standard_normal(6)
            vec = (vec / np.linalg.norm(vec)).astype(np.float32).astype(np.float64)
            cells[key] = (vec, int(rng.integers(1, 9)))
        frozen = EmbeddingMap3D(cell_size=0.25, dim=6, cells=cells)
        path = tmp_path / "m.dve3"
        write_map3d(frozen, path)
        back = read_map3d(path)
        assert back.cell_size == 0.25
        assert back.dim == 6
        assert set(back.cells) == set(cells)
        for key, (mean, count) in cells.items():
            np.testing.assert_array_equal(back.cells[key][0], mean)
            assert back.cells[key][1] == count

    def test_rewrite_is_byte_identical(self, tmp_path, rng):
        vec = rng.standard_normal(4)
        vec = (vec / np.linalg.norm(vec)).astype(np.float32).astype(np.float64)
        frozen = EmbeddingMap3D(cell_size=0.1, dim=4, cells={(-1, 2, 3): (vec, 2)})
        p1, p2 = tmp_path / "a.dve3", tmp_path / "b.dve3"
        write_map3d(frozen, p1)
        write_map3d(read_map3d(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncated_cells(self, tmp_path):
        blob = struct.pack("<4sIfIQ", b"DVE3", 1, 0.1, 2, 2)
        blob += struct.pack("<iiiI", 0, 0, 0, 1) + struct.pack("<2f", 1.0, 0.0)
        path = tmp_path / "t.dve3"
        path.write_bytes(blob)
        with pytest.raises(TruncatedPayload):
            read_map3d(path)


class TestEmbeddingBank:
    def test_single_entry(self, tmp_path):
        path = tmp_path / "bank.json"
        path.write_text(json.dumps({"dim": 2, "entries": [{"name": "chair", "vector": [1, 0]}]}))
        bank = load_embedding_bank(path)
        assert bank.dim == 2
        assert bank.unique_names() == ["chair"]
        np.testing.assert_array_equal(bank.vectors_for("chair")[0], [1.0, 0.0])

    def test_vector_length_mismatch(self, tmp_path):
        path = tmp_path / "bank.json"
        path.write_text(json.dumps({"dim": 2, "entries": [{"name": "x", "vector": [1, 0, 0]}]}))
        with pytest.raises(DimMismatch):
            load_embedding_bank(path)

    def test_empty_bank_valid(self, tmp_path):
        path = tmp_path / "bank.json"
        path.write_text(json.dumps({"dim": 8, "entries": []}))
        assert load_embedding_bank(path).entries == []

    def test_bad_schema(self, tmp_path):
        path = tmp_path / "bank.json"
        path.write_text(json.dumps({"entries": []}))
        with pytest.raises(BadSchema):
            load_embedding_bank(path)
        path.write_text("not json")
        with pytest.raises(BadSchema):
            load_embedding_bank(path)

    def test_save_load_round_trip(self, tmp_path, rng):
        bank = EmbeddingBank(
            dim=3,
            entries=[("a", rng.standard_normal(3)), ("a", rng.standard_normal(3)),
                     ("b", rng.standard_normal(3))],
        )
        path = tmp_path / "bank.json"
        save_embedding_bank(bank, path)
        back = load_embedding_bank(path)
        assert back.unique_names() == ["a", "b"]
        assert len(back.vectors_for("a")) == 2
        for (n0, v0), (n1, v1) in zip(bank.entries, back.entries):
            assert n0 == n1
            np.testing.assert_array_equal(v0, v1)


class TestProbeAndParamsFiles:
    def test_probe_round_trip(self, tmp_path, rng):
        probe = ProbeWeights(
            weight=rng.standard_normal((3, 4)), bias=rng.standard_normal(3),
            class_names=["wall", "floor", "chair"],
        )
        path = tmp_path / "probe.json"
        save_probe(probe, path)
        back = load_probe(path)
        np.testing.assert_array_equal(back.weight, probe.weight)
        np.testing.assert_array_equal(back.bias, probe.bias)
        assert back.class_names == probe.class_names

    def test_student_params_round_trip(self, tmp_path, rng):
        params = StudentParams(
            [(rng.standard_normal((4, 3)), rng.standard_normal(4)),
             (rng.standard_normal((2, 4)), rng.standard_normal(2))]
        )
        path = tmp_path / "student.npz"
        save_student_params(params, path)
        back = load_student_params(path)
        assert len(back.layers) == 2
        for (w0, b0), (w1, b1) in zip(params.layers, back.layers):
            np.testing.assert_array_equal(w0, w1)
            np.testing.assert_array_equal(b0, b1)


class TestSimilarityPgm:
    def test_linear_mapping_and_header(self):
        sim = np.array([[-1.0, 0.0], [1.0, 2.0]])
        blob = similarity_to_pgm(sim)
        assert blob.startswith(b"P5\n2 2\n255\n")
        pixels = list(blob[len(b"P5\n2 2\n255\n"):])
        assert pixels == [0, 128, 255, 255]

    def test_deterministic(self, rng):
        sim = rng.uniform(-1, 1, size=(5, 7))
        assert similarity_to_pgm(sim) == similarity_to_pgm(sim)


class TestFileInfo:
    def test_dispatch(self, tmp_path):
        vol_path = tmp_path / "v.dvem"
        write_volume(np.ones((2, 3, 4)), vol_path)
        info = file_info(vol_path)
        assert info == {"format": "DVEM", "version": 1, "height": 2, "width": 3,
                        "dim": 4, "dtype": "f32"}
        mask_path = tmp_path / "m.smsk"
        write_mask_map(np.zeros((1, 2), dtype=np.uint16), mask_path)
        assert file_info(mask_path)["format"] == "SMSK"

    def test_unknown_magic(self, tmp_path):
        path = tmp_path / "x.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(BadMagic):
            file_info(path)


class TestScanManifest:
    def test_parse(self, tmp_path):
        manifest = [
            {
                "embedding_map": "a.dvem",
                "depth": "a.npy",
                "intrinsics": {"fx": 500, "fy": 480, "cx": 320, "cy": 240, "depth_scale": 0.001},
                "pose": [1, 0, 0, 0.5, 0, 1, 0, -1.0, 0, 0, 1, 2.0, 0, 0, 0, 1],
            }
        ]
        path = tmp_path / "scans.json"
        path.write_text(json.dumps(manifest))
        scans = load_scan_manifest(path)
        assert len(scans) == 1
        assert scans[0].intrinsics.fx == 500
        np.testing.assert_array_equal(scans[0].pose.translation, [0.5, -1.0, 2.0])

    def test_bad_pose_length(self, tmp_path):
        manifest = [{"embedding_map": "a", "depth": "b",
                     "intrinsics": {"fx": 1, "fy": 1, "cx": 0, "cy": 0, "depth_scale": 1},
                     "pose": [1, 0, 0]}]
        path = tmp_path / "scans.json"
        path.write_text(json.dumps(manifest))
        with pytest.raises(BadSchema):
            load_scan_manifest(path)
