"""
Scenario file ingestion.

A scenario is a JSON document. "kind": "pomdp" (the default) describes a
finite PomdpModel; "kind": "gaussian" carries the coefficients of the
two-stage linear-Gaussian example. The schema is documented in
docs/scenario_schema.md.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from lib.analysis.gaussian import GaussianScenario
from lib.errors import ScenarioError
from lib.model.pomdp import LabeledPoint, PomdpModel, UtilitySpec, validate_model

logger = logging.getLogger(__name__)

REQUIRED_POMDP_FIELDS = (
    'observable_states', 'hidden_states', 'actions', 'kernel', 'initial_hidden_law',
    'dm_cost', 'im_cost', 'dm_discount', 'im_discount', 'horizon',
)

GAUSSIAN_FIELDS = ('h', 'b_tilde', 'b_hat', 'c_hat', 'r_hat', 'a0', 'y0', 'x1')

Scenario = Union[PomdpModel, GaussianScenario]


class ScenarioLoader:
    """Loads and validates a scenario file."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    def load(self) -> Scenario:
        """
        Read, parse and validate the scenario.

        Raises:
            FileNotFoundError: If the file doesn't exist
            ScenarioError: If the document is malformed or fails validation
        """
        if not self.path.exists():
            raise FileNotFoundError(f"Scenario file not found: {self.path}")

        logger.info(f"Loading scenario from {self.path}")
        try:
            with open(self.path, 'r') as f:
                document = json.load(f)
        except json.JSONDecodeError as e:
            raise ScenarioError(f"Scenario {self.path} is not valid JSON: {e}")

        if not isinstance(document, dict):
            raise ScenarioError(f"Scenario {self.path} must be a JSON object")

        kind = document.get('kind', 'pomdp')
        if kind == 'gaussian':
            return self._parse_gaussian(document)
        if kind != 'pomdp':
            raise ScenarioError(f"Unknown scenario kind '{kind}' in {self.path}")
        return self._parse_pomdp(document)

    def _parse_gaussian(self, document: Dict[str, Any]) -> GaussianScenario:
        missing = [name for name in GAUSSIAN_FIELDS if name not in document]
        if missing:
            raise ScenarioError(f"Gaussian scenario {self.path} is missing fields: {', '.join(missing)}")
        try:
            return GaussianScenario(
                **{name: float(document[name]) for name in GAUSSIAN_FIELDS},
                dm_discount=float(document.get('dm_discount', 1.0)),
                im_discount=float(document.get('im_discount', 1.0)),
            )
        except (TypeError, ValueError) as e:
            raise ScenarioError(f"Gaussian scenario {self.path} is invalid: {e}")

    def _parse_pomdp(self, document: Dict[str, Any]) -> PomdpModel:
        missing = [name for name in REQUIRED_POMDP_FIELDS if name not in document]
        if missing:
            raise ScenarioError(f"Scenario {self.path} is missing fields: {', '.join(missing)}")

        try:
            observable = _parse_space(document['observable_states'])
            hidden = _parse_space(document['hidden_states'])
            actions = _parse_space(document['actions'])
            feasible = _parse_feasible(document.get('feasible_actions'), observable, actions)

            gamma = float(document.get('im_cost_weight', 1.0))
            initial_x = document.get('initial_observable_law')

            model = PomdpModel(
                observable_states=observable,
                hidden_states=hidden,
                actions=actions,
                feasible_actions=feasible,
                kernel=np.array(document['kernel'], dtype=float),
                initial_hidden_law=np.array(document['initial_hidden_law'], dtype=float),
                dm_cost=np.array(document['dm_cost'], dtype=float),
                im_cost=gamma * np.array(document['im_cost'], dtype=float),
                dm_discount=float(document['dm_discount']),
                im_discount=float(document['im_discount']),
                horizon=int(document['horizon']),
                utility=UtilitySpec.from_dict(document.get('utility', {})),
                initial_observable_law=None if initial_x is None else np.array(initial_x, dtype=float),
                name=str(document.get('name', self.path.stem)),
            )
        except (TypeError, ValueError, KeyError) as e:
            raise ScenarioError(f"Scenario {self.path} is malformed: {e}")

        report = validate_model(model)
        if not report.ok:
            raise ScenarioError(f"Scenario {self.path} failed validation: {report}", report)

        logger.info(f"Loaded {model!r}")
        return model

    def __repr__(self) -> str:
        return f"ScenarioLoader(path='{self.path}')"


def _parse_space(entries: List[Any]) -> tuple:
    points = []
    for entry in entries:
        if isinstance(entry, str):
            points.append(LabeledPoint(entry))
            continue
        value = entry.get('value')
        points.append(LabeledPoint(str(entry['label']), None if value is None else float(value)))
    labels = [p.label for p in points]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate labels in {labels}")
    return tuple(points)


def _parse_feasible(mapping: Any, observable: tuple, actions: tuple) -> tuple:
    if mapping is None:
        return tuple(tuple(range(len(actions))) for _ in observable)
    index = {p.label: i for i, p in enumerate(actions)}
    rows = []
    for point in observable:
        names = mapping.get(point.label, [])
        unknown = [name for name in names if name not in index]
        if unknown:
            raise ValueError(f"feasible_actions({point.label}) names unknown actions {unknown}")
        rows.append(tuple(index[name] for name in names))
    return tuple(rows)


def scenario_to_dict(model: PomdpModel) -> Dict[str, Any]:
    """Inverse of the loader for finite models (im_cost_weight folded to 1)."""
    document: Dict[str, Any] = {
        'kind': 'pomdp',
        'name': model.name,
        'observable_states': [p.to_dict() for p in model.observable_states],
        'hidden_states': [p.to_dict() for p in model.hidden_states],
        'actions': [p.to_dict() for p in model.actions],
        'feasible_actions': {
            model.x_label(x): [model.a_label(a) for a in row]
            for x, row in enumerate(model.feasible_actions)
        },
        'kernel': model.kernel.tolist(),
        'initial_hidden_law': model.initial_hidden_law.tolist(),
        'dm_cost': model.dm_cost.tolist(),
        'im_cost': model.im_cost.tolist(),
        'dm_discount': model.dm_discount,
        'im_discount': model.im_discount,
        'horizon': model.horizon,
        'utility': model.utility.to_dict(),
    }
    if model.initial_observable_law is not None:
        document['initial_observable_law'] = model.initial_observable_law.tolist()
    return document


def save_scenario(model: PomdpModel, path: Union[str, Path]) -> None:
    with open(path, 'w') as f:
        json.dump(scenario_to_dict(model), f, indent=2)
