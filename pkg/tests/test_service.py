import base64

import numpy as np
import pytest
from fastapi.testclient import TestClient

from gase import atlas, phantoms
from gase.service import create_app, decode_image, encode_image
from gase.service import ApiImage


class TestApiImageCodec:
    def test_round_trip(self):
        rng = np.random.default_rng(0)
        img = rng.random((6, 5, 3)).astype(np.float32)
        obj = encode_image(img)
        assert obj["width"] == 5 and obj["height"] == 6 and obj["channels"] == 3
        decoded = decode_image(ApiImage(**obj))
        np.testing.assert_array_equal(decoded, img)

    def test_decoded_length_contract(self):
        img = np.zeros((4, 4, 1), np.float32)
        obj = encode_image(img)
        assert len(base64.b64decode(obj["encoding"])) == 4 * 4 * 1 * 4

    def test_bad_length_is_400(self):
        obj = ApiImage(width=4, height=4, channels=1,
                       encoding=base64.b64encode(b"\0" * 10).decode())
        with pytest.raises(Exception, match="expected"):
            decode_image(obj)


@pytest.fixture(scope="module")
def service(tiny_checkpoint, tmp_path_factory):
    checkpoint, manifest = tiny_checkpoint
    atlas_dir = tmp_path_factory.mktemp("atlas")
    val_pairs = phantoms.load_split(manifest, "val")
    atlas.build_atlas(checkpoint, atlas_dir, n=6, seed=2, method="pca",
                      reference_label=val_pairs[0].label)
    atlas.export_labels(val_pairs[:3], atlas_dir / "labels")
    app = create_app(checkpoint, atlas_dir=atlas_dir)
    return TestClient(app)


@pytest.fixture(scope="module")
def service_no_atlas(tiny_checkpoint):
    checkpoint, _ = tiny_checkpoint
    return TestClient(create_app(checkpoint))


class TestEndpoints:
    def test_health(self, service):
        body = service.get("/health").json()
        assert body["status"] == "ok"
        assert body["style_dim"] == 8
        assert len(body["checkpoint"]) == 16

    def test_manifold_serves_atlas_points(self, service):
        points = service.get("/manifold").json()
        assert len(points) == 6
        for p in points:
            assert set(p) == {"id", "u", "v", "cluster"}
            assert -1.0 <= p["u"] <= 1.0 and -1.0 <= p["v"] <= 1.0

    def test_manifold_recomputes_without_atlas(self, service_no_atlas):
        points = service_no_atlas.get("/manifold", params={"n": 8, "seed": 1}).json()
        assert len(points) == 8
        again = service_no_atlas.get("/manifold", params={"n": 8, "seed": 1}).json()
        assert points == again

    def test_labels_listing(self, service):
        labels = service.get("/labels").json()
        ids = {l["id"] for l in labels}
        assert "reference" in ids and "label_000" in ids
        preview = labels[0]["preview"]
        assert preview["channels"] == 5

    def test_synthesize_deterministic_for_z_seed(self, service):
        req = {"z_seed": 11}
        a = service.post("/synthesize", json=req).json()
        b = service.post("/synthesize", json=req).json()
        assert a["image"]["encoding"] == b["image"]["encoding"]
        assert a["style"] == b["style"]
        img = decode_image(ApiImage(**a["image"]))
        assert img.shape == (32, 32, 1)
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_synthesize_with_style_id_and_label_id(self, service):
        resp = service.post("/synthesize", json={"style_id": 0, "label_id": "label_001"})
        assert resp.status_code == 200

    def test_synthesize_unknown_ids_404(self, service):
        assert service.post("/synthesize", json={"style_id": 999}).status_code == 404
        assert service.post("/synthesize", json={"label_id": "nope"}).status_code == 404

    def test_synthesize_bad_style_length_400(self, service):
        assert service.post("/synthesize", json={"style": [0.1, 0.2]}).status_code == 400

    def test_schema_violation_is_400(self, service):
        assert service.post("/interpolate", json={"style_a": "x"}).status_code == 400

    def test_segment_channel_sums(self, service, tiny_checkpoint):
        _, manifest = tiny_checkpoint
        pair = phantoms.load_split(manifest, "test")[0]
        resp = service.post("/segment", json={"image": encode_image(pair.image)}).json()
        label = decode_image(ApiImage(**resp["label"]))
        conf = decode_image(ApiImage(**resp["confidence"]))
        assert label.shape == (32, 32, 5)
        np.testing.assert_allclose(label.sum(axis=-1), 1.0, atol=1e-5)
        assert conf.shape == (32, 32, 1)
        assert conf.min() > 0.0 and conf.max() < 1.0

    def test_interpolate_endpoints_match_synthesize(self, service):
        pts = service.get("/manifold").json()
        style_a = service.post("/synthesize", json={"style_id": pts[0]["id"]}).json()
        style_b = service.post("/synthesize", json={"style_id": pts[1]["id"]}).json()
        resp = service.post(
            "/interpolate",
            json={"style_a": style_a["style"], "style_b": style_b["style"], "steps": 2},
        ).json()
        assert [s["t"] for s in resp["steps"]] == [0.0, 1.0]
        assert resp["steps"][0]["image"]["encoding"] == style_a["image"]["encoding"]
        assert resp["steps"][1]["image"]["encoding"] == style_b["image"]["encoding"]

    def test_interpolation_is_exactly_linear(self, service):
        a = [0.0] * 8
        b = [1.0] * 8
        resp = service.post(
            "/interpolate", json={"style_a": a, "style_b": b, "steps": 5}
        ).json()
        assert [s["t"] for s in resp["steps"]] == [0.0, 0.25, 0.5, 0.75, 1.0]

    def test_concurrent_style_requests_consistent(self, service):
        import concurrent.futures

        def call(seed):
            return service.post("/synthesize", json={"z_seed": 5}).json()["image"]["encoding"]

        with concurrent.futures.ThreadPoolExecutor(4) as pool:
            results = list(pool.map(call, range(8)))
        assert len(set(results)) == 1
