"""Big Five trait identifiers in their canonical order."""

TRAITS = ("Extr", "Agr", "Cons", "Emot", "Openn")
POSITIVE = 1
NEGATIVE = 0


def check_trait(trait):
    if trait not in TRAITS:
        raise ValueError(f"unknown trait {trait!r}; expected one of {TRAITS}")
    return trait
