"""Bundled 18th-century-flavored vocabulary for the synthetic corpus.

Entry texts stay at nine normalized characters or fewer: register entries are
terse, and short strings keep the consensus classes of distinct readings
cleanly separated at the default class threshold.
"""

PLAY_TITLES = (
    "Timon",
    "Le Joueur",
    "Les Fées",
    "Danaé",
    "Zémire",
    "Coraline",
    "Nitétis",
    "Agnès",
    "Le Bal",
    "La Foire",
    "Arlequin",
    "Mérope",
)

PERSON_NAMES = (
    "Silvia",
    "Lélio",
    "Mario",
    "Carlin",
    "Camille",
    "Flaminia",
    "Violette",
    "Thomassin",
)

PAGE_CATEGORIES = (
    "recettes",
    "depenses",
    "distribution",
    "autre",
)
