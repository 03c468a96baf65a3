import numpy as np
import pytest

from mcsbi.errors import ModelSyntaxError, PropensityError
from mcsbi.model import (
    BUILTIN_MODELS,
    builtin_model,
    builtin_model_text,
    load_model,
    mass_action_propensity,
    parse_model,
    propensity_eval,
    render_model,
    stoichiometry_matrix,
)
from mcsbi.ssa import simulate

SIR_TEXT = """
param k_i = 0.1
param k_r = 1.0
species S = 40
species I = 10
species R = 0
reaction infection: S + I -> 2*I @ k_i*S*I   # mass action
reaction recovery: I -> R @ k_r*I
"""


class TestParseModel:
    def test_sir(self):
        net = parse_model(SIR_TEXT)
        assert net.species == ("S", "I", "R")
        np.testing.assert_array_equal(net.x0, [40, 10, 0])
        assert net.n_reactions == 2
        assert net.reactions[0].change_vector == (-1, 1, 0)
        assert net.reactions[1].change_vector == (0, -1, 1)

    def test_no_reactions(self):
        net = parse_model("species A = 7\n")
        assert net.n_reactions == 0
        traj = simulate(net, 10.0, seed=1)
        np.testing.assert_array_equal(traj.states, [[7]])
        assert stoichiometry_matrix(net).shape == (1, 0)

    def test_undeclared_species_named(self):
        with pytest.raises(ModelSyntaxError, match="Z") as exc:
            parse_model("species A = 1\nreaction r: A -> Z @ 1.0*A\n")
        assert exc.value.line == 2

    def test_negative_initial_count(self):
        with pytest.raises(ModelSyntaxError, match="negative"):
            parse_model("species A = -3\n")

    def test_unknown_parameter_in_expression(self):
        with pytest.raises(ModelSyntaxError, match="q"):
            parse_model("species A = 1\nreaction r: A -> 0 @ q*A\n")

    def test_syntax_error_has_position(self):
        with pytest.raises(ModelSyntaxError) as exc:
            parse_model("species A = 1\nreaction r: A -> 0 @ (A\n")
        assert exc.value.line == 2
        assert exc.value.column > 0

    def test_unknown_keyword(self):
        with pytest.raises(ModelSyntaxError, match="keyword"):
            parse_model("specie A = 1\n")

    def test_override(self):
        net = parse_model(SIR_TEXT, {"k_i": 0.5})
        assert propensity_eval(net, 0, [40, 10, 0]) == pytest.approx(200.0)
        with pytest.raises(ModelSyntaxError, match="bogus"):
            parse_model(SIR_TEXT, {"bogus": 1.0})

    def test_polynomial_expression(self):
        net = parse_model("param c = 2\nspecies A = 1\nspecies B = 1\n"
                          "reaction r: A + B -> 0 @ c*(A + 1)^2*B\n")
        assert propensity_eval(net, 0, [2, 3]) == pytest.approx(2 * 9 * 3)


class TestPropensity:
    def test_linear(self):
        net = parse_model("param k = 2.0\nspecies X = 3\nreaction d: X -> 0 @ k*X\n")
        assert propensity_eval(net, 0, [3]) == 6.0

    def test_sir_infection(self):
        assert propensity_eval(parse_model(SIR_TEXT), 0, [40, 10, 0]) == pytest.approx(40.0)

    def test_viral_zero_factor(self):
        net = builtin_model("viral")
        g = net.index("G")
        state = np.full(net.n_species, 5)
        state[g] = 0
        assert propensity_eval(net, 5, state) == 0.0

    def test_negative_propensity_rejected(self):
        net = parse_model("species X = 3\nreaction r: X -> 0 @ X - 5\n")
        with pytest.raises(PropensityError, match="r"):
            propensity_eval(net, 0, [3])

    def test_mass_action(self):
        p = mass_action_propensity([1, 1, 0], 1.0)
        assert p([2.0, 3.0, 9.0]) == 6.0
        assert mass_action_propensity([2], 1.0)([4.0]) == 12.0
        c = mass_action_propensity([0], 5.0)
        assert c.degree == 0 and c([0.0]) == 5.0


class TestBuiltins:
    def test_lacz(self):
        net = builtin_model("lacz")
        assert net.n_reactions == 11
        assert net.parameters["k10"] == pytest.approx(6.42e-5)
        assert stoichiometry_matrix(net).shape == (net.n_species, 11)

    def test_genosc(self):
        net = builtin_model("genosc")
        assert net.n_reactions == 16
        assert net.n_species == 9
        assert net.parameters["k13"] == 2.0
        x0 = dict(zip(net.species, net.initial))
        assert x0["X1"] == 10 and x0["X3"] == 10
        assert sorted(v for k, v in x0.items() if k not in ("X1", "X3")) == [1] * 7

    def test_viral(self):
        net = builtin_model("viral")
        assert net.n_reactions == 6
        assert net.parameters["k6"] == pytest.approx(7.5e-6)
        x0 = dict(zip(net.species, net.initial))
        assert x0["T"] == 10 and sum(x0.values()) == 10
        assert net.parameters["c_n"] == 1.0 and net.parameters["c_a"] == 1.0

    def test_sir_initial_state(self):
        np.testing.assert_array_equal(builtin_model("sir").x0, [40, 10, 0])

    def test_sir_stoichiometry(self):
        np.testing.assert_array_equal(stoichiometry_matrix(builtin_model("sir")), [[-1, 0], [1, -1], [0, 1]])

    @pytest.mark.parametrize("name", BUILTIN_MODELS)
    def test_round_trip(self, name):
        net = builtin_model(name)
        assert parse_model(render_model(net)) == net

    def test_unknown_builtin(self):
        with pytest.raises(KeyError):
            builtin_model_text("nope")

    def test_load_model_path(self, tmp_path):
        path = tmp_path / "m.crn"
        path.write_text(SIR_TEXT)
        assert load_model(str(path)) == parse_model(SIR_TEXT)
        assert load_model("sir") == builtin_model("sir")
