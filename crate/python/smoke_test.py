"""Smoke test for the pyxdeps extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`,
or copy the compiled library to `pyxdeps.so` on PYTHONPATH.
"""

import os
import tempfile

import pyxdeps


def main():
    raising = pyxdeps.Grammar("raising")
    control = pyxdeps.Grammar("control")
    assert raising.validate() == [] and control.validate() == []
    assert sum(control.depth_counts(4).values()) == 504
    assert raising.depth_counts(6) == {d: 2 for d in range(2, 7)}

    lex = pyxdeps.Lexicon()
    assert "vraagt" in lex.slot("TV.obj")
    control_sentence = "de docent vraagt de hond de student de oefeningen te laten doen"
    assert control.recognize(control_sentence, 2) is not None
    assert control.recognize(control_sentence.replace(" te ", " "), 2) is None

    with tempfile.TemporaryDirectory() as tmp:
        data = os.path.join(tmp, "raising.jsonl")
        samples = pyxdeps.generate(raising, 4, per_tree=5, seed=3, out=data)
        assert len(samples) == 30
        for s in samples:
            assert s["subject_map"] == list(range(len(s["verb_spans"])))
        loaded = pyxdeps.read_dataset(data)
        assert loaded["samples"] == samples
        assert loaded["header"]["lexicon_hash"] == lex.hash

        emb = os.path.join(tmp, "raising.emb")
        assert pyxdeps.synthesize("positional", data, emb, dim=24) == 30
        report = pyxdeps.baseline_report("adjacent-noun", data)
        assert report["consistency"] == 1.0

        code, out, _ = pyxdeps.run_cli(["verify", data])
        assert code == 0 and out.endswith("ok\n"), out
        code, _, err = pyxdeps.run_cli(["no-such-command"])
        assert code == 1, err

    print("pyxdeps %s smoke test passed" % pyxdeps.__version__)


if __name__ == "__main__":
    main()
