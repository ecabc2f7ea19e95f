"""Versioned checkpoints: all parameter arrays plus a JSON metadata entry.

The container is a single npz archive. Array keys are "<component>/<param>";
"__meta__" holds a JSON string with the format version, per-component
architecture info, and whatever lineage the caller attaches (seed, config
hash, data split). Writes are atomic.
"""

import io
import json
import os
import tempfile

import numpy as np

from .errors import ConfigError, ShapeMismatchError
from .nn.model import GINConfig, GINParams, TaskHeadParams
from .prompt import PromptParams

FORMAT_VERSION = 1


def save_checkpoint(path, components, meta=None):
    """components: {tag: {param_name: Tensor-or-array}}; meta: JSON-able dict."""
    arrays = {}
    for tag, named in components.items():
        for name, value in named.items():
            data = value.data if hasattr(value, "data") else np.asarray(value)
            arrays[f"{tag}/{name}"] = np.asarray(data, dtype=np.float64)
    full_meta = {"format_version": FORMAT_VERSION}
    full_meta.update(meta or {})
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.array(json.dumps(full_meta, sort_keys=True)), **arrays)
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path):
    """Returns ({tag: {param_name: ndarray}}, meta dict)."""
    with np.load(path, allow_pickle=False) as npz:
        meta = json.loads(str(npz["__meta__"][()]))
        components = {}
        for key in npz.files:
            if key == "__meta__":
                continue
            tag, name = key.split("/", 1)
            components.setdefault(tag, {})[name] = np.array(npz[key])
    if meta.get("format_version") != FORMAT_VERSION:
        raise ConfigError(
            f"checkpoint format {meta.get('format_version')!r} not supported"
        )
    return components, meta


def _fill(named, arrays, tag):
    for name, tensor in named.items():
        if name not in arrays:
            raise ConfigError(f"checkpoint missing {tag}/{name}")
        if arrays[name].shape != tensor.data.shape:
            raise ShapeMismatchError(
                f"{tag}/{name}: stored shape {arrays[name].shape} != "
                f"expected {tensor.data.shape}"
            )
        tensor.data = np.array(arrays[name])


def save_models(path, gin, head, prompts=None, meta=None):
    """Persist encoder + head and any prompts, tagged by role."""
    components = {"gin": gin.named(), "head": head.named()}
    arch = {
        "gin_config": {
            "input_dim": gin.config.input_dim,
            "hidden_dim": gin.config.hidden_dim,
            "num_layers": gin.config.num_layers,
            "dropout": gin.config.dropout,
        },
        "head_hidden": head.mlp.dims[1],
        "prompts": {},
    }
    for tag, prompt in (prompts or {}).items():
        components[tag] = prompt.named(tag)
        arch["prompts"][tag] = {
            "mlp_hidden": prompt.mlp.dims[1],
            "heads": prompt.heads,
            "multi_head": prompt.multi_head,
            "dropout": prompt.dropout,
        }
    full = dict(meta or {})
    full["arch"] = arch
    save_checkpoint(path, components, full)


def load_models(path):
    """Rebuild (gin, head, prompts, meta) from a save_models checkpoint."""
    components, meta = load_checkpoint(path)
    arch = meta["arch"]
    gin = GINParams.init(GINConfig(**arch["gin_config"]), 0)
    _fill(gin.named(), components["gin"], "gin")
    head = TaskHeadParams.init(gin.config.input_dim, arch["head_hidden"], 0)
    _fill(head.named(), components["head"], "head")
    prompts = {}
    for tag, pcfg in arch["prompts"].items():
        prompt = PromptParams.init(
            gin.config.input_dim, pcfg["mlp_hidden"], 0,
            heads=pcfg["heads"], multi_head=pcfg["multi_head"],
            dropout=pcfg["dropout"],
        )
        _fill({k: v for k, v in prompt.named(tag).items()}, components[tag], tag)
        prompts[tag] = prompt
    return gin, head, prompts, meta
