"""Randomized data generation at the clients.

For each client: train a local extractor to convergence, tap its hidden
activations, encode them into merged bit strings and randomize those. Only
the randomized bits leave this module.
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ldpfl.base.config import RunConfig
from ldpfl.base.errors import LDPFLError, StageError
from ldpfl.bitcodec import encode_matrix
from ldpfl.data import (
    Dataset,
    PartitionPlan,
    load_csv,
    load_idx,
    local_split,
    partition_equal,
    partition_non_iid,
    synth_blobs,
)
from ldpfl.export.prepared import PreparedData
from ldpfl.neuralnet import LayerLayout, extract_features, init_params, train
from ldpfl.privacy import SensitivityRecord, string_sensitivity
from ldpfl.randomizer import RandomizerSpec, pad_for, randomize_dataset
from ldpfl.utils import rng as streams

logger = logging.getLogger("ldpfl")


@dataclass
class ClientOutput:
    client_id: int
    prepared: PreparedData
    sensitivity: SensitivityRecord
    spec: RandomizerSpec | None
    raw_features: np.ndarray


def load_dataset(cfg: RunConfig) -> Dataset:
    source = cfg.data
    match source.kind:
        case "idx":
            return load_idx(source.images_path, source.labels_path)
        case "csv":
            return load_csv(source.csv_path, source.label_column)
        case _:
            return synth_blobs(
                source.classes, source.per_class, source.dims, source.spread, cfg.seed
            )


def partition(ds: Dataset, cfg: RunConfig) -> PartitionPlan:
    clients = cfg.federation.clients
    if cfg.partition.mode == "non_iid":
        return partition_non_iid(ds, clients, cfg.partition.sparsity, cfg.seed)
    return partition_equal(ds, clients, cfg.seed)


def randomizer_spec(cfg: RunConfig, width: int) -> RandomizerSpec:
    randomizer = cfg.randomizer
    return RandomizerSpec(
        mechanism=randomizer.mechanism,
        epsilon=randomizer.epsilon,
        alpha=randomizer.alpha,
        sensitivity=width if randomizer.mechanism.needs_sensitivity else None,
    )


def prepare_client(client_id: int, ds: Dataset, cfg: RunConfig) -> ClientOutput:
    """Randomized rows of one client, training rows first, held-out rows last.

    The extractor only ever trains on the training rows.
    """
    stage = "split"
    try:
        train_rows, test_rows = local_split(
            np.arange(len(ds)), cfg.seed, client_id, cfg.partition.test_fraction
        )
        train_set = ds.subset(train_rows)
        ds = ds.subset(np.concatenate([train_rows, test_rows]))

        stage = "extractor"
        layout = LayerLayout.classifier([ds.feature_dim, *cfg.extractor.hidden, ds.classes])
        extractor = train(
            init_params(layout, streams.substream_seed(cfg.seed, streams.EXTRACTOR, client_id)),
            train_set.features,
            train_set.labels,
            cfg.extractor.optimizer,
            cfg.extractor.epochs,
            streams.substream_seed(cfg.seed, streams.EXTRACTOR, client_id, 1),
            patience=cfg.extractor.patience,
        )

        stage = "flatten"
        features = extract_features(extractor, ds.features, cfg.extractor.tap_layer)
        r = features.shape[1]

        stage = "encode"
        sensitivity = string_sensitivity(r, cfg.codec)
        pad = pad_for(cfg.randomizer.mechanism, r, cfg.codec.l) if cfg.randomizer.enabled else 0
        bits = encode_matrix(np.pad(features, ((0, 0), (0, pad))), cfg.codec)

        stage = "randomize"
        spec = None
        if cfg.randomizer.enabled:
            spec = randomizer_spec(cfg, bits.shape[1])
            bits = randomize_dataset(
                bits, spec, streams.substream_seed(cfg.seed, streams.RANDOMIZE, client_id)
            )
        prepared = PreparedData(
            bits, ds.labels, r, cfg.codec.l, pad, ds.classes, holdout=len(test_rows)
        )
    except LDPFLError as e:
        raise StageError(client_id, stage, e) from e

    logger.info(
        f"client {client_id}: {len(ds)} rows, r={r}, rl={sensitivity.delta_f}"
        + (f" (+{pad} pad values)" if pad else "")
    )
    return ClientOutput(client_id, prepared, sensitivity, spec, features)


def prepare_all(cfg: RunConfig, ds: Dataset | None = None) -> list[ClientOutput]:
    ds = load_dataset(cfg) if ds is None else ds
    plan = partition(ds, cfg)
    logger.info(f"partitioned {len(ds)} rows over {len(plan)} clients ({plan.mode}): {plan.sizes}")
    return [prepare_client(i, ds.subset(group), cfg) for i, group in enumerate(plan.groups)]


def federated_datasets(prepared: Sequence[PreparedData]) -> list[tuple[Dataset, Dataset]]:
    """Each client's randomized (train, held-out test) sets, as split at preparation."""
    return [data.split() for data in prepared]
