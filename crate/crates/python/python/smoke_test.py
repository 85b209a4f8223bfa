"""Builds the extension with cargo, imports it and exercises the main calls.

Run from anywhere: python3 crates/python/python/smoke_test.py
"""
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[3]


def build(dest):
    subprocess.run(["cargo", "build", "--release", "-p", "ebookhmm-py"], cwd=ROOT, check=True)
    lib = ROOT / "target" / "release" / "libebookhmm_py.so"
    shutil.copy(lib, dest / "ebookhmm.so")
    sys.path.insert(0, str(dest))


def main():
    tmp = pathlib.Path(tempfile.mkdtemp())
    build(tmp)
    import ebookhmm

    alphabet = ebookhmm.Alphabet.default()
    assert len(alphabet) == 107, len(alphabet)
    assert ebookhmm.normalize("a§", alphabet) == ebookhmm.normalize("a ", alphabet)

    aln = ebookhmm.align("GATTACA", "GCATGCU", alphabet)
    assert aln["score"] == 0 and len(aln["top"]) == aln["alignment_length"]
    assert ebookhmm.identity("Rosa", "Rosa") == 1.0

    editions = ["Rosa Dartle", "Rosa Dartle", "Eosa Dartle"]
    text, model = ebookhmm.estimate_consensus(editions)
    assert text == "Rosa Dartle", text
    assert model.consensus() == text and model.length == 11
    logp, path = model.viterbi("Rosa Dartle")
    assert logp <= model.forward("Rosa Dartle") < 0.0
    assert path[0][0] == "begin" and path[-1][0] == "end"

    model.save(str(tmp / "model.json"))
    again = ebookhmm.ProfileHmm.load(str(tmp / "model.json"))
    assert again.to_json() == model.to_json()

    truth = (ROOT / "fixtures" / "gull_rock.txt").read_text(encoding="utf-8")
    noisy = ebookhmm.synth_editions(truth, editions=5, seed=3)
    estimate, _ = ebookhmm.estimate_consensus(noisy)
    report = ebookhmm.identity_report(estimate, truth)
    assert report["percent_ignoring_tags_near_misses_and_linebreaks"] >= 99.0, report
    assert ebookhmm.identity_report("x", "x")["percent_match"] == 100.0

    try:
        ebookhmm.estimate_consensus(["only one edition"])
    except ValueError as e:
        assert "two editions" in str(e)
    else:
        raise AssertionError("one edition accepted")

    print("smoke test ok:", report["percent_match"], model)


if __name__ == "__main__":
    main()
