import json

import numpy as np
import pytest

from otloss.extraction import load_lexicon
from otloss.recipe_metrics import Recipe

CARBONARA = {
    "ingredients": [
        "200g Guanciale, cubed",
        "4 large egg yolks",
        "50g Pecorino Romano cheese, grated",
        "320g Spaghetti",
        "Coarsely ground black pepper",
        "Salt",
    ],
    "instructions": [
        "Boil salted water in a large pot.",
        "Fry the guanciale in a skillet until crispy.",
        "Remove the skillet from the heat.",
        "Combine egg yolks, Pecorino, and pepper in a bowl.",
        "Garnish with extra cheese and pepper.",
        "Serve immediately.",
    ],
}

# self-paired fixtures for the identity checks; the carbonara comes first
FIXTURE_RECIPES = [
    CARBONARA,
    {
        "ingredients": ["320g spaghetti", "2 tbsp olive oil", "3 cloves garlic", "1 chili"],
        "instructions": [
            "Boil the spaghetti for 10 minutes.",
            "Fry garlic and chili in the oil.",
            "Toss the pasta in the pan and serve.",
        ],
    },
    {
        "ingredients": ["300g arborio rice", "1 l broth", "1 onion", "50g butter", "60g parmesan"],
        "instructions": [
            "Melt the butter and sauté the onion for 5 minutes.",
            "Toast the rice for 2 minutes.",
            "Add broth and simmer for 18 minutes, stirring often.",
            "Stir in parmesan and serve.",
        ],
    },
    {
        "ingredients": ["500g flour", "300 ml water", "7g yeast", "10g salt"],
        "instructions": [
            "Mix flour, water and yeast.",
            "Knead for 10 minutes and rest for 1 hour 30 minutes.",
            "Preheat the oven to 250°C.",
            "Bake for 20-25 minutes.",
        ],
    },
    {
        "ingredients": ["4 chicken thighs", "1 tsp paprika", "2 tbsp olive oil", "Salt"],
        "instructions": [
            "Season the chicken with paprika and salt.",
            "Roast at 200 °C for 40 minutes.",
            "Rest for 5 minutes before serving.",
        ],
    },
    {
        "ingredients": ["2 eggs", "1 cup milk", "1 cup flour", "1 pinch of salt"],
        "instructions": [
            "Whisk eggs and milk.",
            "Fold in the flour and salt.",
            "Cook in a hot pan for 2 minutes per side.",
        ],
    },
    {
        "ingredients": ["1 kg potatoes", "100 ml cream", "40g butter"],
        "instructions": [
            "Peel the potatoes and boil them for 25 minutes.",
            "Drain and mash with butter and cream.",
        ],
    },
    {
        "ingredients": ["2 steaks", "1 tbsp butter", "2 sprigs thyme"],
        "instructions": [
            "Heat a pan until smoking.",
            "Sear the steaks for 3 minutes per side.",
            "Baste with butter and rest for 5 minutes.",
        ],
    },
    {
        "ingredients": ["200g dark chocolate", "3 eggs", "100g sugar", "100g butter"],
        "instructions": [
            "Preheat the oven to 350°F.",
            "Melt chocolate and butter.",
            "Whisk eggs with sugar, then fold in the chocolate.",
            "Bake for 25 minutes.",
        ],
    },
    {
        "ingredients": ["1 cucumber", "2 tomatoes", "½ red onion", "Feta cheese"],
        "instructions": [
            "Slice the cucumber and the tomatoes.",
            "Chop the onion.",
            "Toss everything with the feta and serve.",
        ],
    },
]


@pytest.fixture
def carbonara():
    return Recipe.from_dict(CARBONARA)


@pytest.fixture
def fixture_recipes():
    return [Recipe.from_dict(r) for r in FIXTURE_RECIPES]


@pytest.fixture
def lexicon():
    return load_lexicon()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def write_json(tmp_path):
    """Write a JSON document under tmp_path and return its path."""

    def _write(name, document):
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return path

    return _write
