import base64
import io

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from a2f.pipeline import load_session
from a2f.schema import AttributeSchema
from a2f.service import create_app


@pytest.fixture()
def client(micro_checkpoints):
    schema, (s1, g2, g3) = micro_checkpoints
    app = create_app(load_session(s1, g2, g3))
    return TestClient(app)


@pytest.fixture()
def cold_client():
    return TestClient(create_app(None))


def decode_png(b64: str) -> np.ndarray:
    with Image.open(io.BytesIO(base64.b64decode(b64))) as im:
        return np.asarray(im.convert("RGB"))


class TestHealthAndSchema:
    def test_healthz(self, client):
        assert client.get("/healthz").status_code == 200

    def test_schema_before_load_is_503(self, cold_client):
        assert cold_client.get("/schema").status_code == 503
        assert cold_client.post("/synthesize", json={"attributes": {}}).status_code == 503

    def test_schema_names_groups_defaults(self, client, micro_checkpoints):
        schema, _ = micro_checkpoints
        payload = client.get("/schema").json()
        assert payload["names"] == list(schema.names)
        assert payload["groups"]["Bold"] == "texture"
        assert payload["groups"]["Dark"] == "color"
        assert all(v == 0.0 for v in payload["defaults"].values())
        assert payload["sweep_weights"] == [-1.0, -0.1, 0.1, 0.4, 0.7, 1.0]

    def test_schema_round_trips_through_loader(self, client, micro_checkpoints, tmp_path):
        schema, _ = micro_checkpoints
        payload = client.get("/schema").json()
        rebuilt = AttributeSchema.from_records(
            [(n, payload["groups"][n]) for n in payload["names"]]
        )
        assert rebuilt.fingerprint() == schema.fingerprint()


class TestSynthesize:
    def test_explicit_seed_is_byte_identical(self, client):
        body = {"attributes": {"Bold": 1.0, "Dark": -1.0}, "seed": 42}
        a = client.post("/synthesize", json=body).json()
        b = client.post("/synthesize", json=body).json()
        assert a["images"] == b["images"]
        assert a["seed"] == 42

    def test_all_three_stage_images_present(self, client):
        out = client.post("/synthesize", json={"attributes": {}, "seed": 1}).json()
        assert set(out["images"]) == {"stage1", "stage2", "stage3"}
        for b64 in out["images"].values():
            img = decode_png(b64)
            assert img.shape == (64, 64, 3)

    def test_omitted_seed_echoed_and_replayable(self, client):
        first = client.post("/synthesize", json={"attributes": {"Bold": 0.5}}).json()
        seed = first["seed"]
        replay = client.post("/synthesize",
                             json={"attributes": {"Bold": 0.5}, "seed": seed}).json()
        assert replay["images"] == first["images"]

    def test_unknown_attribute_400(self, client):
        resp = client.post("/synthesize", json={"attributes": {"Nope": 1.0}, "seed": 0})
        assert resp.status_code == 400

    def test_out_of_range_400(self, client):
        resp = client.post("/synthesize", json={"attributes": {"Bold": 1.5}, "seed": 0})
        assert resp.status_code == 400

    def test_wrong_length_array_422(self, client):
        resp = client.post("/synthesize", json={"attributes": [0.0, 0.0], "seed": 0})
        assert resp.status_code == 422

    def test_array_form_accepted(self, client):
        resp = client.post("/synthesize", json={"attributes": [0.0] * 6, "seed": 3})
        assert resp.status_code == 200

    def test_ablation_flags_respected(self, client):
        base = client.post("/synthesize", json={"attributes": {}, "seed": 9}).json()
        ablated = client.post(
            "/synthesize",
            json={"attributes": {}, "seed": 9, "ablation": {"no_attr_stage3": True}},
        ).json()
        assert base["images"]["stage1"] == ablated["images"]["stage1"]
        assert base["images"]["stage2"] == ablated["images"]["stage2"]
        assert base["images"]["stage3"] != ablated["images"]["stage3"]

    def test_unknown_flag_400(self, client):
        resp = client.post("/synthesize",
                           json={"attributes": {}, "seed": 0, "ablation": {"bogus": True}})
        assert resp.status_code == 400


class TestSweep:
    def test_default_six_images_with_weights(self, client):
        out = client.post("/sweep", json={"attribute": "Bold", "seed": 5}).json()
        assert out["weights"] == [-1.0, -0.1, 0.1, 0.4, 0.7, 1.0]
        assert len(out["images"]) == 6

    def test_single_weight(self, client):
        out = client.post("/sweep",
                          json={"attribute": "Bold", "seed": 5, "weights": [0.5]}).json()
        assert len(out["images"]) == 1

    def test_same_seed_identical_strip(self, client):
        a = client.post("/sweep", json={"attribute": "Round", "seed": 8}).json()
        b = client.post("/sweep", json={"attribute": "Round", "seed": 8}).json()
        assert a["images"] == b["images"]

    def test_unknown_attribute_400(self, client):
        assert client.post("/sweep", json={"attribute": "Nope"}).status_code == 400

    def test_bad_weight_400(self, client):
        resp = client.post("/sweep", json={"attribute": "Bold", "weights": [3.0]})
        assert resp.status_code == 400
