"""Versioned JSON model files.

Every fitted goal model is written as a pydantic document tagged with ``kind`` and
``format_version``; trees are stored as flat node arrays.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError

from .ensemble import CombinedModel
from .errors import DataError, ModelVersionError
from .models import FEATURE_NAMES
from .predictors import GoalModel
from .predictors.boosting import BoostedModel
from .predictors.forest import ForestModel
from .predictors.lasso import LassoPoissonModel
from .predictors.trees import TreeArrays

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format_version: int = FORMAT_VERSION
    tuning: dict[str, Any] = Field(default_factory=dict)


class TreeDocument(BaseModel):
    feature: list[int]
    threshold: list[float]
    left: list[int]
    right: list[int]
    value: list[float]

    @classmethod
    def from_tree(cls, tree: TreeArrays) -> "TreeDocument":
        return cls.model_validate(tree.to_dict())

    def to_tree(self) -> TreeArrays:
        sizes = {len(self.feature), len(self.threshold), len(self.left), len(self.right), len(self.value)}
        if len(sizes) != 1:
            raise DataError("tree node arrays differ in length")
        return TreeArrays.from_lists(self.feature, self.threshold, self.left, self.right, self.value)


class LassoDocument(_Document):
    kind: Literal["lasso"] = "lasso"
    intercept: float
    coefficients: list[float]
    penalty: float
    feature_mean: list[float]
    feature_scale: list[float]
    feature_names: list[str] = Field(default_factory=lambda: list(FEATURE_NAMES))


class ForestDocument(_Document):
    kind: Literal["forest"] = "forest"
    mtry: int
    min_leaf: int
    seed: int
    sampling: Literal["bootstrap", "subsample"] = "bootstrap"
    sample_fraction: float = 0.632
    trees: list[TreeDocument]


class BoostedDocument(_Document):
    kind: Literal["xgb"] = "xgb"
    base_score: float
    learning_rate: float
    leaf_count_penalty: float
    l2_leaf_penalty: float
    max_depth: int
    min_child_weight: float = 1.0
    max_delta_step: Optional[float] = 0.7
    loss: str = "poisson_deviance"
    trees: list[TreeDocument]


class CombinedDocument(_Document):
    kind: Literal["combined"] = "combined"
    weights: tuple[float, float, float]
    lasso: Optional[LassoDocument] = None
    forest: Optional[ForestDocument] = None
    xgb: Optional[BoostedDocument] = None


ModelDocument = Annotated[
    Union[LassoDocument, ForestDocument, BoostedDocument, CombinedDocument],
    Field(discriminator="kind"),
]
_documents = TypeAdapter(ModelDocument)


def _lasso_document(model: LassoPoissonModel) -> LassoDocument:
    return LassoDocument(
        intercept=model.intercept,
        coefficients=model.coefficients.tolist(),
        penalty=model.penalty,
        feature_mean=model.feature_mean.tolist(),
        feature_scale=model.feature_scale.tolist(),
        feature_names=list(model.feature_names),
    )


def _forest_document(model: ForestModel) -> ForestDocument:
    return ForestDocument(
        mtry=model.mtry, min_leaf=model.min_leaf, seed=model.seed, sampling=model.sampling,
        sample_fraction=model.sample_fraction,
        trees=[TreeDocument.from_tree(t) for t in model.trees],
    )


def _boosted_document(model: BoostedModel) -> BoostedDocument:
    return BoostedDocument(
        base_score=model.base_score, learning_rate=model.learning_rate,
        leaf_count_penalty=model.leaf_count_penalty, l2_leaf_penalty=model.l2_leaf_penalty,
        max_depth=model.max_depth, min_child_weight=model.min_child_weight,
        max_delta_step=model.max_delta_step, loss=model.loss,
        trees=[TreeDocument.from_tree(t) for t in model.trees],
    )


def to_document(model: GoalModel, tuning: Optional[dict[str, Any]] = None):
    if isinstance(model, LassoPoissonModel):
        doc = _lasso_document(model)
    elif isinstance(model, ForestModel):
        doc = _forest_document(model)
    elif isinstance(model, BoostedModel):
        doc = _boosted_document(model)
    elif isinstance(model, CombinedModel):
        doc = CombinedDocument(
            weights=model.weights,
            lasso=_lasso_document(model.lasso) if model.lasso else None,
            forest=_forest_document(model.forest) if model.forest else None,
            xgb=_boosted_document(model.boosted) if model.boosted else None,
        )
    else:
        raise DataError(f"cannot persist a {type(model).__name__}")
    return doc.model_copy(update={"tuning": dict(tuning or {})})


def _lasso_model(doc: LassoDocument) -> LassoPoissonModel:
    return LassoPoissonModel(
        intercept=doc.intercept,
        coefficients=np.asarray(doc.coefficients, dtype=float),
        penalty=doc.penalty,
        feature_mean=np.asarray(doc.feature_mean, dtype=float),
        feature_scale=np.asarray(doc.feature_scale, dtype=float),
        feature_names=tuple(doc.feature_names),
    )


def _forest_model(doc: ForestDocument) -> ForestModel:
    return ForestModel(
        trees=tuple(t.to_tree() for t in doc.trees), mtry=doc.mtry, min_leaf=doc.min_leaf,
        seed=doc.seed, sampling=doc.sampling, sample_fraction=doc.sample_fraction,
    )


def _boosted_model(doc: BoostedDocument) -> BoostedModel:
    return BoostedModel(
        base_score=doc.base_score, trees=tuple(t.to_tree() for t in doc.trees),
        learning_rate=doc.learning_rate, leaf_count_penalty=doc.leaf_count_penalty,
        l2_leaf_penalty=doc.l2_leaf_penalty, max_depth=doc.max_depth,
        min_child_weight=doc.min_child_weight, max_delta_step=doc.max_delta_step, loss=doc.loss,
    )


def from_document(doc) -> GoalModel:
    if isinstance(doc, LassoDocument):
        return _lasso_model(doc)
    if isinstance(doc, ForestDocument):
        return _forest_model(doc)
    if isinstance(doc, BoostedDocument):
        return _boosted_model(doc)
    return CombinedModel(
        weights=doc.weights,
        lasso=_lasso_model(doc.lasso) if doc.lasso else None,
        forest=_forest_model(doc.forest) if doc.forest else None,
        boosted=_boosted_model(doc.xgb) if doc.xgb else None,
    )


def file_sha256(path: Path | str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def save_model(
    model: GoalModel, path: Path | str, tuning: Optional[dict[str, Any]] = None
) -> str:
    """Write ``model`` as JSON and return the file's SHA-256."""
    path = Path(path)
    doc = to_document(model, tuning)
    path.write_text(doc.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("saved %s model to %s", doc.kind, path)
    return file_sha256(path)


def read_document(path: Path | str):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: model file not found")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a model file: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError(f"{path}: not a model file")
    version = raw.get("format_version")
    if not isinstance(version, int):
        raise DataError(f"{path}: missing format_version")
    if version > FORMAT_VERSION:
        raise ModelVersionError(
            f"{path}: model format {version} is newer than supported version {FORMAT_VERSION}"
        )
    try:
        return _documents.validate_python(raw)
    except ValidationError as exc:
        raise DataError(f"{path}: invalid model document: {exc}") from exc


def load_model(path: Path | str) -> GoalModel:
    return from_document(read_document(path))
