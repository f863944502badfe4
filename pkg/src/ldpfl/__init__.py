import logging
import os

from rich.logging import RichHandler

from ldpfl.base.config import RunConfig
from ldpfl.bitcodec import CodecConfig, decode_vector, encode_vector
from ldpfl.federation import FederationConfig, federated_average, run_simulation
from ldpfl.pipeline import prepare_all, prepare_client
from ldpfl.privacy import compose_parallel, compose_sequential, empirical_epsilon
from ldpfl.randomizer import Mechanism, RandomizerSpec, randomize

FORMAT = "%(message)s"
logging.basicConfig(
    level=os.getenv("LDPFL_LOG_LEVEL", "INFO").upper(),
    format=FORMAT,
    datefmt="[%X]",
    handlers=[RichHandler()],
)


__all__ = [
    "CodecConfig",
    "FederationConfig",
    "Mechanism",
    "RandomizerSpec",
    "RunConfig",
    "compose_parallel",
    "compose_sequential",
    "decode_vector",
    "empirical_epsilon",
    "encode_vector",
    "federated_average",
    "prepare_all",
    "prepare_client",
    "randomize",
    "run_simulation",
]
