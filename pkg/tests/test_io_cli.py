import json

import numpy as np
import pytest

from noisytree import io as nio
from noisytree.bench import PRESETS
from noisytree.cli import main
from noisytree.metrics import distance_matrix_exact
from noisytree.models import CorruptionSpec, flip_for_length, from_symmetric, sample
from noisytree.tree import suppressed_augmented

from .conftest import make_tree


class TestNewick:
    def test_roundtrip_lengths(self, fig1):
        t = fig1.with_lengths({e: 0.1 * sum(e) for e in fig1.edges})
        back = nio.from_newick(nio.to_newick(t))
        assert back == t
        for e in t.edges:
            assert back.lengths[e] == pytest.approx(t.lengths[e])

    def test_unlabelled_inner(self):
        t = nio.from_newick("((1:1,2:1):0.5,3:1,4:2);")
        assert t.leaves == {1, 2, 3, 4}
        assert all(v < 0 for v in t.inner)
        assert t.path_length(1, 4) == pytest.approx(3.5)

    def test_no_lengths(self):
        t = nio.from_newick("(1,2,(3,4)5)6;")
        assert not t.has_lengths
        assert t.neighbors(5) and set(t.neighbors(5)) == {3, 4, 6}

    @pytest.mark.parametrize("bad", ["(1,2", "(1,a);", "(1,1);", "(1,2));"])
    def test_errors(self, bad):
        with pytest.raises(ValueError):
            nio.from_newick(bad)

    def test_json_roundtrip(self, tmp_path):
        b = PRESETS["binary10"]
        t = suppressed_augmented(b.with_lengths({e: 1.0 for e in b.edges}), {v: 0.5 for v in range(1, 11)})
        path = tmp_path / "t.json"
        nio.write_tree(t, path)
        back = nio.read_tree(path)
        assert back == t and back.noisy_offset == t.noisy_offset
        assert dict(back.lengths) == dict(t.lengths)


class TestDistanceFiles:
    def dm(self, fig1):
        m = from_symmetric(fig1, 2, 0.2)
        return distance_matrix_exact(m, CorruptionSpec.uniform(fig1.nodes, flip_for_length(0.5, 2)))

    def test_csv_roundtrip(self, fig1):
        D = self.dm(fig1)
        back = nio.distances_from_csv(nio.distances_to_csv(D))
        assert back.labels == D.labels
        np.testing.assert_array_equal(back.values, D.values)

    def test_phylip_lower_triangular(self, fig1):
        D = self.dm(fig1)
        text = nio.distances_to_phylip(D)
        lines = text.strip().splitlines()
        assert lines[0] == "5"
        assert len(lines[1].split()) == 1 and len(lines[5].split()) == 5
        back = nio.distances_from_phylip(text)
        np.testing.assert_allclose(back.values, D.values, rtol=1e-9)
        assert back.noisy_offset == 1000

    def test_infer_offset(self):
        assert nio.infer_offset([1001, 1005]) == 1000
        assert nio.infer_offset([10001, 10020]) == 10000
        assert nio.infer_offset([1, 2, 3]) is None
        assert nio.infer_offset([1001, 2500]) is None


class TestBatchFiles:
    def test_roundtrip_with_sidecar(self, tmp_path, fig1):
        b = sample(from_symmetric(fig1, 3, 0.1), 50, 4)
        nio.write_batch(b, tmp_path / "b.csv")
        side = json.loads((tmp_path / "b.json").read_text())
        assert side["r"] == 3 and side["n"] == 50 and side["seed"]["entropy"] == 4
        back = nio.read_batch(tmp_path / "b.csv")
        np.testing.assert_array_equal(back.data, b.data)
        assert back.labels == b.labels and back.r == 3

    def test_model_json(self, fig1):
        m = from_symmetric(fig1, 2, 0.2)
        m2 = nio.model_from_dict(json.loads(json.dumps(nio.model_to_dict(m))))
        for k, M in m.transitions.items():
            np.testing.assert_allclose(m2.transitions[k], M)


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def star_model(tmp_path):
    return _write(tmp_path / "model.json", {
        "type": "symmetric",
        "tree": nio.tree_to_dict(PRESETS["star8"]),
        "params": {"r": 2, "theta": 0.2},
        "noise": {"default": {"kind": "flip_length", "ell": 0.5}},
    })


class TestCli:
    def test_pipeline(self, tmp_path, star_model, capsys):
        out = str(tmp_path / "o")
        noise = _write(tmp_path / "noise.json", {"default": {"kind": "flip_length", "ell": 0.5}})
        ref = str(tmp_path / "star.json")
        nio.write_tree(PRESETS["star8"], ref)
        rc = _write(tmp_path / "rc.json", {"target": "tstar"})
        assert main(["simulate", "--spec", star_model, "--seed", "1", "--sample-size", "3000", "--out", out]) == 0
        assert main(["corrupt", f"{out}/clean.csv", "--spec", noise, "--seed", "2", "--out", out]) == 0
        assert main(["estimate", f"{out}/noisy.csv", "--out", out]) == 0
        assert main(["recover", f"{out}/distances.csv", "--spec", rc, "--reference", ref, "--out", out]) == 0
        result = json.loads((tmp_path / "o" / "result.json").read_text())
        assert result["diagnostics"]["tstar_exact"] is True
        assert main(["rf", f"{out}/tstar.nwk", ref, "--format", "json"]) == 0
        report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert report["rf_normalized"] == 0 and report["semi_labeled_equal"]

    def test_estimate_exact(self, tmp_path, star_model):
        out = tmp_path / "x"
        assert main(["estimate", "--exact", "--spec", star_model, "--out", str(out), "--format", "json"]) == 0
        d = json.loads((out / "distances.json").read_text())
        assert d["provenance"] == "exact"
        assert (out / "distances.phy").exists()

    def test_rf_quartets(self, tmp_path, capsys):
        a, b = tmp_path / "a.nwk", tmp_path / "b.nwk"
        a.write_text("((1,2),(3,4));")
        b.write_text("((1,3),(2,4));")
        assert main(["rf", str(a), str(b)]) == 0
        assert capsys.readouterr().out.strip().splitlines()[-1].startswith("1,0,1,1,False")
        assert main(["rf", str(a), str(a)]) == 0
        assert capsys.readouterr().out.strip().splitlines()[-1] == "0,1,0,0,True"

    def test_rf_fig2(self, tmp_path, fig1, capsys):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        nio.write_tree(suppressed_augmented(fig1, offset=1000), a)
        nio.write_tree(suppressed_augmented(make_tree([(1, 4), (1, 3), (4, 2), (4, 5)]), offset=1000), b)
        assert main(["rf", str(a), str(b), "--format", "json"]) == 0
        assert json.loads(capsys.readouterr().out)["semi_labeled_equal"] is True

    def test_experiment_and_overrides(self, tmp_path):
        spec = _write(tmp_path / "e.json", {"tree": "chain8", "sweep": [0.5], "epsilons": [0.5],
                                            "replicates": 5, "sample_size": 100})
        out = tmp_path / "e"
        assert main(["experiment", "--spec", spec, "--replicates", "2", "--sample-size", "300",
                     "--seed", "9", "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["row_count"] == 2 and manifest["spec"]["seed"] == 9
        assert (out / "aggregate.csv").exists()
        assert main(["experiment", "--spec", spec, "--exact", "--out", str(tmp_path / "j"), "--format", "json"]) == 0
        assert (tmp_path / "j" / "rows.json").exists()

    def test_config_errors_exit_2(self, tmp_path):
        assert main(["experiment", "--spec", str(tmp_path / "missing.json")]) == 2
        bad = _write(tmp_path / "bad.json", {"tree": "oak"})
        assert main(["experiment", "--spec", bad]) == 2
        assert main(["experiment", "--spec", _write(tmp_path / "r.json", {"replicates": 0})]) == 2
        (tmp_path / "broken.json").write_text("{not json")
        assert main(["simulate", "--spec", str(tmp_path / "broken.json")]) == 2
        assert main(["simulate", "--seed", "-1"]) == 2
        assert main(["nonsense"]) == 2

    def test_runtime_error_exit_3(self, tmp_path):
        # Two taxa parse fine but Neighbor-Joining needs three.
        d = tmp_path / "d.csv"
        d.write_text(",1001,1002\n1001,0,1\n1002,1,0\n")
        assert main(["recover", str(d), "--out", str(tmp_path / "r")]) == 3
