import json

import pytest

from errors import ModelFileError
from interaction import ExplicitFamily, ExponentialKernel, NearestNeighborKernel, PowerLawKernel
from lattice import SiteSet
from model_spec import build_model, fingerprint, load_model, parse_model

EXPONENTIAL = {
    "dimension": 1,
    "beta": 0.05,
    "potential": {"kind": "pairwise-exponential", "amplitude": 1.0, "decay": 1.0},
}

PLAQUETTE = {
    "dimension": 2,
    "beta": 0.01,
    "potential": {
        "kind": "explicit",
        "translate": True,
        "terms": [
            {"sites": [[0, 0], [1, 0]], "coupling": 1.0},
            {"sites": [[0, 0], [0, 1]], "coupling": 1.0},
            {"sites": [[0, 0], [1, 0], [0, 1]], "coupling": 0.5},
        ],
    },
}


class TestParsing:
    def test_exponential(self):
        m = build_model(parse_model(EXPONENTIAL))
        assert isinstance(m.potential, ExponentialKernel)
        assert m.beta == 0.05
        assert m.translation_invariant

    @pytest.mark.parametrize(
        "potential, cls",
        [
            ({"kind": "nearest-neighbor"}, NearestNeighborKernel),
            ({"kind": "pairwise-powerlaw", "exponent": 3.0}, PowerLawKernel),
            ({"kind": "explicit", "terms": [{"sites": [[0], [1]], "coupling": 0.5}]}, ExplicitFamily),
        ],
    )
    def test_every_kind(self, potential, cls):
        m = build_model(parse_model({"dimension": 1, "beta": 0.1, "potential": potential}))
        assert isinstance(m.potential, cls)

    def test_explicit_family_with_translations(self):
        m = build_model(parse_model(PLAQUETTE))
        assert m.dimension == 2
        assert m.max_range() == 2

    def test_truncation_and_sites(self):
        data = {**EXPONENTIAL, "truncation": {"radius": 4}, "sites": [[0], [3]]}
        m = build_model(parse_model(data))
        assert m.truncation_radius == 4
        assert m.sites == SiteSet([(0,), (3,)])


class TestErrors:
    @pytest.mark.parametrize(
        "data, key",
        [
            ({**EXPONENTIAL, "colour": "blue"}, "colour"),
            ({**EXPONENTIAL, "potential": {**EXPONENTIAL["potential"], "rate": 2.0}}, "potential.rate"),
            ({**EXPONENTIAL, "potential": {"kind": "pairwise-exponential", "decay": -1.0}}, "potential.decay"),
            ({**EXPONENTIAL, "beta": -0.1}, "beta"),
            ({k: v for k, v in EXPONENTIAL.items() if k != "dimension"}, "dimension"),
            ({**EXPONENTIAL, "truncation": {"radius": 0}}, "truncation.radius"),
            ({**EXPONENTIAL, "potential": {"kind": "yukawa"}}, "potential"),
        ],
    )
    def test_offending_key_is_named(self, data, key):
        with pytest.raises(ModelFileError) as err:
            parse_model(data)
        assert err.value.key == key

    def test_power_law_must_be_summable(self):
        data = {"dimension": 2, "beta": 0.1, "potential": {"kind": "pairwise-powerlaw", "exponent": 2.0}}
        with pytest.raises(ModelFileError) as err:
            parse_model(data)
        assert err.value.key == "potential.exponent"

    def test_site_dimension(self):
        data = {**PLAQUETTE, "potential": {"kind": "explicit", "terms": [{"sites": [[0, 0], [1]], "coupling": 1.0}]}}
        with pytest.raises(ModelFileError) as err:
            parse_model(data)
        assert err.value.key == "potential.terms.0.sites.1"

    def test_repeated_site(self):
        data = {"dimension": 1, "beta": 0.1, "potential": {"kind": "explicit", "terms": [{"sites": [[2], [2]], "coupling": 1.0}]}}
        with pytest.raises(ModelFileError) as err:
            parse_model(data)
        assert err.value.key == "potential.terms.0.sites"


class TestFiles:
    def test_load_and_fingerprint(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(json.dumps(EXPONENTIAL))
        spec, model = load_model(path)
        assert isinstance(model.potential, ExponentialKernel)
        # key order and whitespace do not change the fingerprint
        reordered = tmp_path / "reordered.json"
        reordered.write_text(json.dumps(dict(reversed(list(EXPONENTIAL.items()))), indent=4))
        assert fingerprint(load_model(reordered)[0]) == fingerprint(spec)
        other = parse_model({**EXPONENTIAL, "beta": 0.06})
        assert fingerprint(other) != fingerprint(spec)
        assert len(fingerprint(spec)) == 64

    def test_missing_file(self, tmp_path):
        with pytest.raises(ModelFileError, match="not found"):
            load_model(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{\"dimension\": 1,")
        with pytest.raises(ModelFileError, match="invalid JSON"):
            load_model(path)
