import json

import numpy as np
import pytest

from stvgcn.attributes import MissingClass
from stvgcn.data import (
    Instance, ParseError, SynthConfigError, SynthSpec, dumps_canonical, gen_synth, load_instances, parse_record,
    write_instances,
)
from stvgcn.graph import MalformedInput
from stvgcn.padding import N_ORIG


def person(v=0.5):
    return [[v, v, 0.9]] * 17


def write_index(tmp_path, lines, entries, names=("a", "b")):
    (tmp_path / "f.ndjson").write_text("".join(json.dumps(x) + "\n" for x in lines))
    idx = tmp_path / "f.index.json"
    idx.write_text(json.dumps({"instances": [dict(file="f.ndjson", **e) for e in entries], "label_names": list(names)}))
    return idx


def test_parse_record(dictionary):
    rec = {"frame": 3, "persons": [person()], "objects": [{"class": "pen", "cx": 0.2, "cy": 0.3, "score": 0.8}]}
    vg = parse_record(rec, dictionary)
    assert vg.frame_index == 3 and vg.m == 1 and vg.objects[0].category_index == dictionary.index_of("pen")
    with pytest.raises(MissingClass):
        parse_record({"frame": 0, "persons": [], "objects": [{"class": "axe", "cx": 0, "cy": 0, "score": 1}]},
                     dictionary)
    with pytest.raises(MalformedInput):
        parse_record({"frame": 0, "persons": [[[0, 0, 1]]], "objects": []}, dictionary)
    with pytest.raises(MalformedInput):
        parse_record({"frame": 0, "persons": [], "objects": [], "extra": 1}, dictionary)


def test_empty_object_lists(tmp_path, dictionary):
    lines = [{"frame": t, "persons": [person()], "objects": []} for t in range(4)]
    insts, names = load_instances(write_index(tmp_path, lines, [{"start": 0, "end": 4, "label": 1}]), dictionary)
    assert names == ["a", "b"] and insts[0].label == 1
    assert all(len(vg.objects) == 0 for vg in insts[0].frames)


def test_malformed_line_named(tmp_path, dictionary):
    lines = [{"frame": 0, "persons": [person()], "objects": []}]
    idx = write_index(tmp_path, lines, [{"start": 0, "end": 2, "label": 0}])
    with open(tmp_path / "f.ndjson", "a") as fh:
        fh.write("{not json\n")
    with pytest.raises(ParseError) as e:
        load_instances(idx, dictionary)
    assert e.value.line == 2 and "f.ndjson:2" in str(e.value)


def test_unknown_class_in_file(tmp_path, dictionary):
    lines = [{"frame": 0, "persons": [], "objects": [{"class": "axe", "cx": 0, "cy": 0, "score": 1}]}]
    with pytest.raises(MissingClass):
        load_instances(write_index(tmp_path, lines, [{"start": 0, "end": 1, "label": 0}]), dictionary)


def test_round_trip_canonical(tmp_path):
    spec = SynthSpec(n_train=6, n_test=2, T=5, c_ca=8)
    tr, _, d = gen_synth(spec, 1)
    idx = write_instances(tr, tmp_path / "a", d, spec.label_names())
    back, names = load_instances(idx, d)
    idx2 = write_instances(back, tmp_path / "b", d, names)
    assert (tmp_path / "a" / "instances.ndjson").read_bytes() == (tmp_path / "b" / "instances.ndjson").read_bytes()
    assert json.loads(idx.read_text()) == json.loads(idx2.read_text())
    # canonical form sorts keys
    line = (tmp_path / "a" / "instances.ndjson").read_text().splitlines()[0]
    assert line == dumps_canonical(json.loads(line))


def test_gen_synth_balanced_deterministic():
    spec = SynthSpec(motions=2, objects=2, label_mode="both", n_train=40, n_test=20, T=6, c_ca=8)
    assert spec.num_classes == 4
    tr, te, d = gen_synth(spec, 3)
    counts = np.bincount([i.label for i in tr], minlength=4)
    assert np.all(counts == 10)
    tr2, _, _ = gen_synth(spec, 3)
    for a, b in zip(tr, tr2):
        assert a.label == b.label
        assert [n.position for n in a.frames[2].nodes()[:17]] == [n.position for n in b.frames[2].nodes()[:17]]
    for inst in tr + te:
        for vg in inst.frames:
            for n in vg.persons[0]:
                assert 0 <= n.position[0] <= 1 and 0 <= n.position[1] <= 1
            assert len(vg.objects) == 1
            assert 0 <= vg.objects[0].attributes.pos[0] <= 1


def test_object_labels_linearly_separable_from_class_channels():
    spec = SynthSpec(objects=3, label_mode="object", n_train=30, n_test=3, T=4, c_ca=8)
    tr, _, d = gen_synth(spec, 0)
    X = np.array([np.asarray(i.frames[0].objects[0].attributes.vector()[N_ORIG:]) for i in tr])
    y = np.array([i.label for i in tr])
    # least-squares one-vs-rest probe
    Y = np.eye(3)[y]
    W, *_ = np.linalg.lstsq(np.c_[X, np.ones(len(X))], Y, rcond=None)
    pred = (np.c_[X, np.ones(len(X))] @ W).argmax(1)
    assert np.mean(pred == y) == 1.0


def test_both_mode_object_identity_only_difference():
    # within a motion class, the skeleton process does not depend on the object
    spec = SynthSpec(label_mode="both", n_train=8, n_test=2, T=4, c_ca=8)
    names = spec.label_names()
    assert names == ["motion0+book", "motion0+pen", "motion1+book", "motion1+pen"]


def test_bad_specs():
    with pytest.raises(SynthConfigError):
        gen_synth(SynthSpec(motions=0))
    with pytest.raises(SynthConfigError):
        gen_synth(SynthSpec(label_mode="verbs"))
    with pytest.raises(SynthConfigError):
        gen_synth(SynthSpec(objects=99))


def test_instance_type():
    assert Instance(frames=[], label=2).label == 2
