import numpy as np
import orjson
import pandas as pd
import pytest
import yaml

from src.models.network import BaseKind
from src.models.symbolic import FunctionKind, SymbolicModel, SymbolicTerm
from src.models.training import TrainConfig
from src.services.kan_core import forward_batch
from src.services.serialization import (
    dumps_network,
    load_network,
    load_symbolic_model,
    loads_network,
    save_config,
    save_network,
    save_symbolic_model,
    write_frame,
    write_key_values,
)
from src.utils.errors import SerializationError
from tests.conftest import build_network


class TestNetworkDocuments:
    """Saving and reloading trained networks"""

    @pytest.mark.parametrize("hidden_width,base_kind", [(0, BaseKind.SILU), (3, BaseKind.IDENTITY)])
    def test_reload_is_exact(self, rng, tmp_path, hidden_width, base_kind):
        net = build_network(rng, n_features=3, hidden_width=hidden_width, base_kind=base_kind)
        net.layers[0].mask[0, 1] = False
        path = tmp_path / "models" / "net.json"
        save_network(net, path)
        reloaded = load_network(path)
        assert reloaded.widths == net.widths
        assert reloaded.base_kind == base_kind
        assert reloaded.normalizer.feature_names == net.normalizer.feature_names
        for original, copy in zip(net.parameter_arrays(), reloaded.parameter_arrays()):
            np.testing.assert_array_equal(original, copy)
        rows = rng.normal(0.0, 1.0, (25, 3))
        times = rng.uniform(0.0, 2.0, 25)
        np.testing.assert_array_equal(forward_batch(reloaded, rows, times), forward_batch(net, rows, times))

    def test_metadata_line(self, rng):
        payload = dumps_network(build_network(rng), metadata="created for a test")
        assert orjson.loads(payload)["metadata"] == "created for a test"
        with pytest.raises(SerializationError):
            dumps_network(build_network(rng), metadata="two\nlines")

    def test_document_is_human_readable(self, rng):
        payload = dumps_network(build_network(rng)).decode("utf-8")
        assert payload.endswith("\n")
        assert "\n  \"widths\"" in payload

    def test_missing_file(self, tmp_path):
        with pytest.raises(SerializationError):
            load_network(tmp_path / "absent.json")

    @pytest.mark.parametrize("payload", [b"{not json", b"[]", b'{"widths": [3, 1]}'])
    def test_malformed_documents(self, payload):
        with pytest.raises(SerializationError):
            loads_network(payload)

    def test_inconsistent_widths(self, rng):
        document = orjson.loads(dumps_network(build_network(rng, n_features=2)))
        document["widths"] = [4, 1]
        with pytest.raises(SerializationError):
            loads_network(orjson.dumps(document))

    def test_truncated_coefficients(self, rng):
        document = orjson.loads(dumps_network(build_network(rng, n_features=2)))
        document["layers"][0]["coefficients"][0][0] = document["layers"][0]["coefficients"][0][0][:-1]
        with pytest.raises(SerializationError):
            loads_network(orjson.dumps(document))


class TestOtherDocuments:

    def test_symbolic_model_round_trip(self, tmp_path):
        model = SymbolicModel(
            terms=[SymbolicTerm(function_kind=FunctionKind.SIN, inner_scale=3.0, inner_shift=0.1,
                                outer_scale=0.5, outer_shift=-0.2, input_name="x1", input_index=0,
                                r_squared=0.999)],
            constant=-1.25, fidelity=0.97, feature_names=["x1"],
        )
        path = tmp_path / "formula.json"
        save_symbolic_model(model, path)
        assert load_symbolic_model(path) == model

    def test_unreadable_symbolic_model(self, tmp_path):
        path = tmp_path / "formula.json"
        path.write_text("{}", encoding="utf-8")
        with pytest.raises(SerializationError):
            load_symbolic_model(path)

    def test_config(self, tmp_path):
        config = TrainConfig(hidden_width=2, lambda_reg=0.05, batch_size=32)
        path = tmp_path / "config.yaml"
        save_config(config, path)
        assert TrainConfig.model_validate(yaml.safe_load(path.read_text(encoding="utf-8"))) == config

    def test_frame_keeps_full_precision(self, tmp_path):
        path = tmp_path / "table.csv"
        values = [0.1 + 0.2, 1.0 / 3.0, 2.0 ** -40]
        write_frame(pd.DataFrame({"value": values}), path)
        assert pd.read_csv(path, float_precision="round_trip")["value"].tolist() == values

    def test_key_values(self, tmp_path):
        path = tmp_path / "metrics.txt"
        write_key_values({"c_index": 2.0 / 3.0, "pairs": 12}, path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[1] == "pairs=12"
        assert float(lines[0].split("=")[1]) == 2.0 / 3.0
