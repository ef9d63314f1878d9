"""Versioned model serialization.

Every model is a single .npz archive holding a JSON metadata blob (format
version, model kind, architecture descriptor, normalization-stats file name)
plus the numeric arrays.  Loading refuses archives whose kind or descriptor
does not match what the current code would construct.
"""

import json

import numpy as np

from .baselines import Gmm, MixtureRegression, StaticGaussian
from .nets import DiscriminatorNet, GruPolicyNet, MlpPolicyNet

FORMAT_VERSION = 1

NET_KINDS = {
    "mlp_policy": MlpPolicyNet,
    "gru_policy": GruPolicyNet,
    "discriminator": DiscriminatorNet,
}


class ModelFormatError(Exception):
    pass


def _net_descriptor(net):
    return {name: list(shape) for name, (_, _, shape) in net.params.slices.items()}


def save_net(net, path, stats_file=None):
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": net.kind,
        "descriptor": _net_descriptor(net),
        "stats_file": stats_file,
    }
    arrays = {f"param/{name}": net.params.get(name) for name in net.params.slices}
    np.savez(path, __meta__=json.dumps(meta, sort_keys=True), **arrays)


def _read_meta(archive):
    if "__meta__" not in archive:
        raise ModelFormatError("missing metadata record")
    meta = json.loads(str(archive["__meta__"]))
    if meta.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported format version {meta.get('format_version')}")
    return meta


def load_net(path, expected_kind=None):
    """Rebuild a network from disk; returns (net, stats_file)."""
    with np.load(path, allow_pickle=False) as z:
        meta = _read_meta(z)
        kind = meta.get("kind")
        if kind not in NET_KINDS:
            raise ModelFormatError(f"unknown model kind {kind!r}")
        if expected_kind is not None and kind != expected_kind:
            raise ModelFormatError(f"expected {expected_kind}, found {kind}")
        net = NET_KINDS[kind]()
        if _net_descriptor(net) != meta.get("descriptor"):
            raise ModelFormatError("architecture descriptor mismatch")
        for name in net.params.slices:
            key = f"param/{name}"
            if key not in z:
                raise ModelFormatError(f"missing parameter array {name}")
            arr = z[key]
            start, stop, shape = net.params.slices[name]
            if arr.shape != shape:
                raise ModelFormatError(f"parameter {name} has shape {arr.shape}, "
                                       f"expected {shape}")
            net.params.flat[start:stop] = arr.ravel()
        return net, meta.get("stats_file")


def save_static_gaussian(model, path):
    meta = {"format_version": FORMAT_VERSION, "kind": "static_gaussian",
            "descriptor": {"dim": int(len(model.mu))}, "stats_file": None}
    np.savez(path, __meta__=json.dumps(meta, sort_keys=True),
             mu=model.mu, sigma=model.sigma)


def save_mixture_regression(model, path, stats_file=None):
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": "mixture_regression",
        "descriptor": {
            "n_components": int(model.gmm.n_components),
            "feature_indices": [int(i) for i in model.feature_indices],
        },
        "stats_file": stats_file,
    }
    np.savez(path, __meta__=json.dumps(meta, sort_keys=True),
             weights=model.gmm.weights, means=model.gmm.means,
             covs=model.gmm.covs)


def load_model(path, expected_kind=None):
    """Load any saved model; returns (model, kind, stats_file)."""
    with np.load(path, allow_pickle=False) as z:
        meta = _read_meta(z)
        kind = meta.get("kind")
        if expected_kind is not None and kind != expected_kind:
            raise ModelFormatError(f"expected {expected_kind}, found {kind}")
        if kind in NET_KINDS:
            pass  # fall through to load_net below (needs a fresh handle)
        elif kind == "static_gaussian":
            model = StaticGaussian(mu=z["mu"].copy(), sigma=z["sigma"].copy())
            return model, kind, meta.get("stats_file")
        elif kind == "mixture_regression":
            gmm = Gmm(weights=z["weights"].copy(), means=z["means"].copy(),
                      covs=z["covs"].copy())
            model = MixtureRegression(
                gmm=gmm,
                feature_indices=list(meta["descriptor"]["feature_indices"]))
            return model, kind, meta.get("stats_file")
        else:
            raise ModelFormatError(f"unknown model kind {kind!r}")
    net, stats_file = load_net(path)
    return net, net.kind, stats_file
