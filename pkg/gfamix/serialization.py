"""
Versioned YAML documents for trained models, group-LASSO models and
simulator ground truth. Every float is written with `float.hex`, so a
document read back reproduces the arrays bit for bit.
"""

import logging
from dataclasses import fields

import numpy as np

from gfamix.errors import DataIOError
from gfamix.glasso import GLassoModel
from gfamix.inference import TrainedModel
from gfamix.model import GenerativeParams, Hyperparameters, LatentRecord
from gfamix.utils import dump_yaml, load_yaml, write_document
from gfamix.variational import VariationalState

logger = logging.getLogger(__name__)

DOCUMENT_VERSION = 1
MODEL_SCHEMA = "gfamix-model"
GLASSO_SCHEMA = "gfamix-glasso"
GROUND_TRUTH_SCHEMA = "gfamix-ground-truth"


def encode_float(value):
    return float.hex(float(value))


def decode_float(value):
    if isinstance(value, str):
        return float.fromhex(value)
    return float(value)


def encode_array(array):
    array = np.asarray(array, dtype=float)
    return {
        "shape": list(array.shape),
        "data": [encode_float(v) for v in array.ravel()],
    }


def decode_array(document):
    try:
        shape = tuple(int(d) for d in document["shape"])
        data = np.array([decode_float(v) for v in document["data"]], dtype=float)
        return data.reshape(shape)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataIOError(f"Malformed array in document: {exc}")


def _encode_hyper(hyper: Hyperparameters):
    encoded = {}
    for key, value in hyper.to_dict().items():
        encoded[key] = encode_float(value) if isinstance(value, float) else value
    return encoded


def _decode_hyper(document):
    values = {}
    for field in fields(Hyperparameters):
        if field.name not in document:
            raise DataIOError(f"Missing hyperparameter '{field.name}'")
        value = document[field.name]
        values[field.name] = decode_float(value) if isinstance(value, str) else value
    return Hyperparameters(**values)


def _check_header(document, schema, path):
    if not isinstance(document, dict) or document.get("schema") != schema:
        raise DataIOError(f"Not a {schema} document", path)
    if document.get("version") != DOCUMENT_VERSION:
        raise DataIOError(
            f"Unsupported {schema} version {document.get('version')!r}", path
        )


def _encode_state(state: VariationalState):
    encoded = {}
    for field in fields(VariationalState):
        value = getattr(state, field.name)
        if field.name == "hyper":
            continue
        elif field.name == "w_mean":
            encoded[field.name] = [[encode_array(w) for w in row] for row in value]
        elif field.name == "what_mean":
            encoded[field.name] = [encode_array(w) for w in value]
        elif field.name == "pruned_bound":
            encoded[field.name] = encode_float(value)
        else:
            encoded[field.name] = encode_array(value)
    return encoded


def _decode_state(document, hyper):
    values = {"hyper": hyper}
    for field in fields(VariationalState):
        if field.name == "hyper":
            continue
        if field.name not in document:
            raise DataIOError(f"Missing state field '{field.name}'")
        value = document[field.name]
        if field.name == "w_mean":
            values[field.name] = [[decode_array(w) for w in row] for row in value]
        elif field.name == "what_mean":
            values[field.name] = [decode_array(w) for w in value]
        elif field.name == "pruned_bound":
            values[field.name] = decode_float(value)
        else:
            values[field.name] = decode_array(value)
    return VariationalState(**values).frozen()


def model_to_document(model: TrainedModel):
    return {
        "schema": MODEL_SCHEMA,
        "version": DOCUMENT_VERSION,
        "hyperparameters": _encode_hyper(model.hyper),
        "view_names": list(model.view_names),
        "view_dims": [int(d) for d in model.view_dims],
        "n_iterations": int(model.n_iterations),
        "converged": bool(model.converged),
        "elbo_trace": [encode_float(v) for v in model.elbo_trace],
        "state": _encode_state(model.state),
    }


def model_from_document(document, path=None):
    _check_header(document, MODEL_SCHEMA, path)
    try:
        hyper = _decode_hyper(document["hyperparameters"])
        state = _decode_state(document["state"], hyper)
        model = TrainedModel(
            hyper=hyper,
            state=state,
            elbo_trace=tuple(decode_float(v) for v in document["elbo_trace"]),
            n_iterations=int(document["n_iterations"]),
            converged=bool(document["converged"]),
            view_dims=tuple(int(d) for d in document["view_dims"]),
            view_names=tuple(str(n) for n in document["view_names"]),
        )
    except KeyError as exc:
        raise DataIOError(f"Missing model field {exc}", path)
    if model.state.view_dims != model.view_dims:
        raise DataIOError("The loadings disagree with the declared view dimensions", path)
    return model


def save_model(model: TrainedModel, path):
    write_document(dump_yaml(model_to_document(model)), path)
    logger.info("Saved the model to %s", path)


def load_model(path) -> TrainedModel:
    return model_from_document(load_yaml(path), path)


def glasso_to_document(model: GLassoModel):
    return {
        "schema": GLASSO_SCHEMA,
        "version": DOCUMENT_VERSION,
        "intercept": encode_float(model.intercept),
        "weights": [encode_array(w) for w in model.weights],
        "lambda_selected": encode_float(model.lambda_selected),
        "lambda_path": [encode_float(v) for v in model.lambda_path],
        "cv_curve": [encode_float(v) for v in model.cv_curve],
        "feature_means": [encode_array(v) for v in model.feature_means],
        "feature_scales": [encode_array(v) for v in model.feature_scales],
    }


def glasso_from_document(document, path=None):
    _check_header(document, GLASSO_SCHEMA, path)
    try:
        return GLassoModel(
            intercept=decode_float(document["intercept"]),
            weights=tuple(decode_array(w) for w in document["weights"]),
            lambda_selected=decode_float(document["lambda_selected"]),
            lambda_path=tuple(decode_float(v) for v in document["lambda_path"]),
            cv_curve=tuple(decode_float(v) for v in document["cv_curve"]),
            feature_means=tuple(decode_array(v) for v in document["feature_means"]),
            feature_scales=tuple(decode_array(v) for v in document["feature_scales"]),
        )
    except KeyError as exc:
        raise DataIOError(f"Missing group-LASSO field {exc}", path)


def save_glasso(model: GLassoModel, path):
    write_document(dump_yaml(glasso_to_document(model)), path)


def load_glasso(path) -> GLassoModel:
    return glasso_from_document(load_yaml(path), path)


def ground_truth_to_document(params, latents):
    return {
        "schema": GROUND_TRUTH_SCHEMA,
        "version": DOCUMENT_VERSION,
        "W": [[encode_array(w) for w in row] for row in params.W],
        "W_hat": [encode_array(w) for w in params.W_hat],
        "tau": encode_array(params.tau),
        "pi": encode_array(params.pi),
        "gamma": encode_array(params.gamma),
        "z": encode_array(latents.z),
        "z_hat": encode_array(latents.z_hat),
        "clusters": [int(c) + 1 for c in latents.c],
        "labels": [int(r) for r in latents.r],
    }


def save_ground_truth(params, latents, path):
    write_document(dump_yaml(ground_truth_to_document(params, latents)), path)


def load_ground_truth(path):
    document = load_yaml(path)
    _check_header(document, GROUND_TRUTH_SCHEMA, path)
    try:
        params = GenerativeParams(
            W=[[decode_array(w) for w in row] for row in document["W"]],
            W_hat=[decode_array(w) for w in document["W_hat"]],
            tau=decode_array(document["tau"]),
            pi=decode_array(document["pi"]),
            gamma=decode_array(document["gamma"]),
        )
        latents = LatentRecord(
            z=decode_array(document["z"]),
            z_hat=decode_array(document["z_hat"]),
            c=np.array(document["clusters"], dtype=int) - 1,
            r=np.array(document["labels"], dtype=int),
        )
    except KeyError as exc:
        raise DataIOError(f"Missing ground-truth field {exc}", path)
    return params, latents
