"""Published planar Readers/Edits models and the sign-reading check.

Coefficients are stored plain-signed. The printed form of the Edits
equation carries an explicit minus on its quadratic term, so it can also be
read "literally" (quadratic coefficient negated); :func:`resolve_sign_convention`
picks the reading whose phase portrait has the documented shape.
"""
from __future__ import annotations

from .field import Domain, PolyVectorField, from_arrays
from .portrait import find_fixed_points, three_point_portrait, working_box

NAMES = ("Readers", "Edits")

RAW_SELF_RATES = (-0.3570, -0.2243)
RAW_COUPLING = (
    (-0.2637, 6.9566, -16.4522, 11.0347),
    (1.2710, -6.9038, 13.6668, -8.6907),
)

NORMALIZED_SELF_RATES = (-0.2677, -0.4655)
NORMALIZED_COUPLING = (
    (2.3520, -8.3986, 11.2901, -5.1815),
    (1.1757, -1.7697, 0.7948, 0.0172),
)


def _read(coupling, convention: str):
    if convention == "plain":
        return coupling
    if convention == "literal":
        edits = list(coupling[1])
        edits[1] = -edits[1]
        return (coupling[0], tuple(edits))
    raise ValueError(f"unknown sign convention {convention!r}")


def readers_edits(convention: str = "plain") -> PolyVectorField:
    """Degree-4 model of raw Readers/Edits traffic on the positive quadrant."""
    return from_arrays(
        RAW_SELF_RATES,
        _read(RAW_COUPLING, convention),
        sign_convention=convention,
        domain=Domain.positive_orthant(2),
        variable_names=NAMES,
        provenance={"source": "published Readers/Edits coefficients"},
    )


def readers_edits_normalized(convention: str = "plain") -> PolyVectorField:
    """Degree-4 model of Readers/Edits as fractions of Internet users, on [0, 1]^2."""
    return from_arrays(
        NORMALIZED_SELF_RATES,
        _read(NORMALIZED_COUPLING, convention),
        sign_convention=convention,
        domain=Domain((0.0, 0.0), (1.0, 1.0)),
        variable_names=NAMES,
        provenance={"source": "published normalized Readers/Edits coefficients"},
    )


def resolve_sign_convention(box: Domain | None = None) -> tuple[str, dict[str, bool]]:
    """Return the reading under which the raw model shows the three-point
    portrait (spiral-attractor origin, saddle a, attractor node b), plus the
    check result for each reading. Raises if the answer is not unique."""
    results = {}
    for conv in ("plain", "literal"):
        model = readers_edits(conv)
        records = find_fixed_points(model, box or working_box(model))
        results[conv] = three_point_portrait(records)
    winners = [c for c, ok in results.items() if ok]
    if len(winners) != 1:
        raise RuntimeError(f"sign reading is not uniquely determined: {results}")
    return winners[0], results
