"""Server and client state machines for residual-based federated averaging.

Round ``t`` runs: server broadcast (downlink) -> clients recover the global
model, train, and send their update (uplink) -> server recovers and
aggregates. Every vector crosses the "wire" as encoded bytes and the
receiver works only from what it decodes.

Trajectories hold ``window + 1`` entries: the newest is the current end
point of the next transition, the older ``window`` entries are history.
Both ends cache the recovered value (prediction + decoded residual), never
the sender's original, so lossy compression cannot desynchronize them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .codec import (
    DOWNLINK,
    IDENTITY,
    UPLINK,
    CompressionConfig,
    MessageBits,
    ResidualMessage,
    compress,
    decode_message,
    decompress,
    message_bits,
    raw_message,
)
from .data import Dataset
from .errors import InsufficientHistoryError, InvalidConfigError, ProtocolOrderError, ShapeError
from .model import MlpModel, TrainConfig, init_model, local_train
from .params import ParamVector
from .predictor import PredictorConfig, Trajectory, predict, recover, residual

NO_COMPRESSION = "no_compression"
COMPRESS_WEIGHTS = "compress_weights"
COMPRESS_GRADIENTS = "compress_gradients"
RESFED = "resfed"
MODES = (NO_COMPRESSION, COMPRESS_WEIGHTS, COMPRESS_GRADIENTS, RESFED)
BASELINE_MODES = (NO_COMPRESSION, COMPRESS_WEIGHTS, COMPRESS_GRADIENTS)


@dataclass(frozen=True)
class ProtocolConfig:
    n_clients: int
    total_rounds: int
    mode: str = RESFED
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    warmup_rounds: int | None = None
    uplink_compression: CompressionConfig = field(default_factory=CompressionConfig)
    downlink_compression: CompressionConfig = field(default_factory=CompressionConfig)
    weighted_aggregation: bool = True

    def __post_init__(self):
        if self.n_clients <= 0:
            raise InvalidConfigError("n_clients must be positive")
        if self.total_rounds < 0:
            raise InvalidConfigError("total_rounds must be >= 0")
        if self.mode not in MODES:
            raise InvalidConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.warmup_rounds is not None and self.warmup_rounds < max(self.predictor.window, 1):
            raise InvalidConfigError(
                f"warmup_rounds={self.warmup_rounds} must be >= max(window, 1) = {max(self.predictor.window, 1)}"
            )

    @property
    def warmup(self) -> int:
        return max(self.predictor.window, 1) if self.warmup_rounds is None else self.warmup_rounds

    def raw_uplink(self, t: int) -> bool:
        return self.mode == NO_COMPRESSION or t <= self.warmup

    def raw_downlink(self, t: int) -> bool:
        # the downlink predictor needs window+1 completed uplinks before it has history
        if self.mode == RESFED:
            return t <= max(self.warmup, self.predictor.window + 1)
        return self.mode == NO_COMPRESSION or t <= self.warmup


@dataclass
class ClientState:
    client_id: int
    dataset: Dataset
    layer_sizes: tuple[int, ...]
    train: TrainConfig
    uplink_predictor: PredictorConfig  # f
    downlink_predictor: PredictorConfig  # replica of the server's h
    local_traj: Trajectory
    global_traj: Trajectory
    model: ParamVector | None = None  # recovered global model training starts from


@dataclass
class ServerState:
    global_model: ParamVector
    client_weights: list[int]
    uplink_predictors: list[PredictorConfig]  # replicas of each client's f
    downlink_predictors: list[PredictorConfig]  # h_i
    local_trajs: list[Trajectory]
    global_trajs: list[Trajectory]
    client_models: list[ParamVector | None]  # the global model as recovered by client i

    @property
    def n_clients(self) -> int:
        return len(self.client_weights)


class MessageRecord(tuple):
    """(client_id, message, bits)."""

    __slots__ = ()

    def __new__(cls, client_id: int, message: ResidualMessage, bits: MessageBits):
        return super().__new__(cls, (client_id, message, bits))

    client_id = property(lambda self: self[0])
    message = property(lambda self: self[1])
    bits = property(lambda self: self[2])


@dataclass
class RoundMessageLog:
    round: int
    downlink: list[MessageRecord]
    uplink: list[MessageRecord]
    uplink_quantities: list[ParamVector]  # pre-compression uplink vector per client
    global_model: ParamVector | None = None

    def total_bits(self, direction: int) -> int:
        records = self.uplink if direction == UPLINK else self.downlink
        return sum(r.bits.total for r in records)

    def payload_bits(self, direction: int) -> int:
        records = self.uplink if direction == UPLINK else self.downlink
        return sum(r.bits.payload_bits for r in records)


def make_states(
    config: ProtocolConfig, datasets: list[Dataset], train: TrainConfig, initial: MlpModel
) -> tuple[ServerState, list[ClientState]]:
    """Fresh server and client states; predictors are shared once here and never sent again."""
    if len(datasets) != config.n_clients:
        raise InvalidConfigError(f"{len(datasets)} datasets for {config.n_clients} clients")
    capacity = config.predictor.window + 1
    clients = [
        ClientState(
            client_id=i,
            dataset=ds,
            layer_sizes=initial.layer_sizes,
            train=train,
            uplink_predictor=config.predictor,
            downlink_predictor=config.predictor,
            local_traj=Trajectory(capacity),
            global_traj=Trajectory(capacity),
        )
        for i, ds in enumerate(datasets)
    ]
    server = ServerState(
        global_model=initial.params,
        client_weights=[len(ds) for ds in datasets],
        uplink_predictors=[c.uplink_predictor for c in clients],
        downlink_predictors=[c.downlink_predictor for c in clients],
        local_trajs=[Trajectory(capacity) for _ in clients],
        global_trajs=[Trajectory(capacity) for _ in clients],
        client_models=[None] * len(clients),
    )
    return server, clients


def aggregate(models: list[ParamVector], weights: list[float]) -> ParamVector:
    """Weighted mean sum_i (n_i / sum n) * w_i, accumulated in ascending client order."""
    if not models:
        raise InvalidConfigError("nothing to aggregate")
    if len(weights) != len(models):
        raise InvalidConfigError(f"{len(weights)} weights for {len(models)} models")
    if any(w <= 0 for w in weights):
        raise InvalidConfigError("aggregation weights must be positive")
    for m in models[1:]:
        models[0].check_same_shape(m)
    total = float(sum(weights))
    acc = None
    for m, w in zip(models, weights):
        term = np.float32(w / total) * m.values
        acc = term if acc is None else acc + term
    return models[0].like(acc)


def _history(traj: Trajectory, drop_newest: bool) -> list[ParamVector]:
    entries = traj.entries
    return entries[:-1] if drop_newest else entries


def _predict_uplink(local_traj: Trajectory, global_traj: Trajectory, cfg: PredictorConfig) -> ParamVector:
    # transition: received global (global_traj newest) -> trained local
    try:
        return predict(_history(local_traj, False), _history(global_traj, True), global_traj.newest, cfg)
    except InsufficientHistoryError as exc:
        raise ProtocolOrderError(f"uplink prediction before warm-up finished: {exc}") from exc


def _predict_downlink(local_traj: Trajectory, global_traj: Trajectory, cfg: PredictorConfig) -> ParamVector:
    # transition: recovered local (local_traj newest) -> aggregated global
    try:
        return predict(_history(global_traj, False), _history(local_traj, True), local_traj.newest, cfg)
    except InsufficientHistoryError as exc:
        raise ProtocolOrderError(f"downlink prediction before warm-up finished: {exc}") from exc


def _scaled_update(start: ParamVector, end: ParamVector, lr: float) -> ParamVector:
    return start.like((start.values - end.values) / np.float32(lr))


def _apply_update(start: ParamVector, update: ParamVector, lr: float) -> ParamVector:
    return start.like(start.values - np.float32(lr) * update.values)


def _transmit(msg: ResidualMessage) -> ResidualMessage:
    """What the receiver sees: the message re-parsed from its bytes."""
    return decode_message(msg.to_bytes())


# -- downlink ---------------------------------------------------------------


def broadcast(server: ServerState, config: ProtocolConfig, t: int, lr: float) -> list[ResidualMessage]:
    """Server side of the round-``t`` downlink; updates the server's mirrors of each client."""
    cfg = config.downlink_compression
    w = server.global_model
    messages = []
    for i in range(server.n_clients):
        if config.raw_downlink(t) or cfg.mode == IDENTITY and config.mode != RESFED:
            recovered, msg = w, raw_message(w, round=t, direction=DOWNLINK, client_id=i)
        elif config.mode == RESFED:
            predicted = _predict_downlink(server.local_trajs[i], server.global_trajs[i], server.downlink_predictors[i])
            r_bar, msg = compress(residual(w, predicted), cfg, round=t, direction=DOWNLINK, client_id=i)
            recovered = recover(predicted, r_bar)
        elif config.mode == COMPRESS_WEIGHTS:
            recovered, msg = compress(w, cfg, round=t, direction=DOWNLINK, client_id=i)
        else:
            start = server.client_models[i]
            u_bar, msg = compress(_scaled_update(start, w, lr), cfg, round=t, direction=DOWNLINK, client_id=i)
            recovered = _apply_update(start, u_bar, lr)
        if config.mode == RESFED:
            server.global_trajs[i].push(recovered)
        server.client_models[i] = recovered
        messages.append(msg)
    return messages


def receive_global(client: ClientState, msg: ResidualMessage, config: ProtocolConfig, t: int) -> ParamVector:
    """Client side of the downlink: recover the global model and cache it."""
    if msg.direction != DOWNLINK or msg.client_id != client.client_id or msg.round != t:
        raise ProtocolOrderError(f"client {client.client_id} got a message for client {msg.client_id}, round {msg.round}")
    payload = decompress(msg)
    if config.raw_downlink(t) or msg.scheme == 0 and config.mode != RESFED:
        recovered = payload
    elif config.mode == RESFED:
        predicted = _predict_downlink(client.local_traj, client.global_traj, client.downlink_predictor)
        recovered = recover(predicted, predicted.like(payload.values))
    elif config.mode == COMPRESS_WEIGHTS:
        recovered = payload
    else:
        recovered = _apply_update(client.model, payload, client.train.learning_rate)
    if client.model is not None:
        recovered = client.model.like(recovered.values)
    if config.mode == RESFED:
        client.global_traj.push(recovered)
    client.model = recovered
    return recovered


# -- uplink -----------------------------------------------------------------


def client_round(client: ClientState, config: ProtocolConfig, t: int) -> tuple[ResidualMessage, ParamVector]:
    """Train from the recovered global model and build the uplink message.

    Returns the message and the vector it encodes before compression.
    """
    if client.model is None:
        raise ProtocolOrderError(f"client {client.client_id} has no global model yet")
    start = client.model
    trained = local_train(
        MlpModel(client.layer_sizes, start), client.dataset, client.train, round_index=t, client_id=client.client_id
    ).params
    cfg = config.uplink_compression
    kw = dict(round=t, direction=UPLINK, client_id=client.client_id)
    if config.raw_uplink(t):
        quantity, recovered, msg = trained, trained, raw_message(trained, **kw)
    elif config.mode == RESFED:
        predicted = _predict_uplink(client.local_traj, client.global_traj, client.uplink_predictor)
        quantity = residual(trained, predicted)
        r_bar, msg = compress(quantity, cfg, **kw)
        recovered = recover(predicted, r_bar)
    elif config.mode == COMPRESS_WEIGHTS:
        quantity = trained
        recovered, msg = compress(trained, cfg, **kw)
    else:
        quantity = _scaled_update(start, trained, client.train.learning_rate)
        u_bar, msg = compress(quantity, cfg, **kw)
        recovered = _apply_update(start, u_bar, client.train.learning_rate)
    if config.mode == RESFED:
        client.local_traj.push(recovered)
    return msg, quantity


def collect(server: ServerState, messages: list[ResidualMessage], config: ProtocolConfig, t: int, lr: float) -> ParamVector:
    """Recover every client's model, cache it, and aggregate into the new global model."""
    if len(messages) != server.n_clients:
        raise ProtocolOrderError(f"expected {server.n_clients} uplink messages, got {len(messages)}")
    by_client = {m.client_id: m for m in messages}
    recovered_models = []
    for i in range(server.n_clients):
        msg = by_client.get(i)
        if msg is None or msg.direction != UPLINK or msg.round != t:
            raise ProtocolOrderError(f"missing round-{t} uplink message from client {i}")
        payload = decompress(msg)
        start = server.client_models[i]
        if config.raw_uplink(t):
            recovered = payload
        elif config.mode == RESFED:
            predicted = _predict_uplink(server.local_trajs[i], server.global_trajs[i], server.uplink_predictors[i])
            recovered = recover(predicted, predicted.like(payload.values))
        elif config.mode == COMPRESS_WEIGHTS:
            recovered = payload
        else:
            recovered = _apply_update(start, payload, lr)
        recovered = server.global_model.like(recovered.values)
        if len(recovered) != len(server.global_model):
            raise ShapeError(f"client {i} sent {len(recovered)} params, expected {len(server.global_model)}")
        if config.mode == RESFED:
            server.local_trajs[i].push(recovered)
        recovered_models.append(recovered)
    weights = server.client_weights if config.weighted_aggregation else [1] * server.n_clients
    server.global_model = aggregate(recovered_models, weights)
    return server.global_model


# -- rounds -----------------------------------------------------------------


def play_round(server: ServerState, clients: list[ClientState], config: ProtocolConfig, t: int) -> RoundMessageLog:
    lr = clients[0].train.learning_rate
    if config.mode == COMPRESS_GRADIENTS and not lr > 0:
        raise InvalidConfigError("compress_gradients needs a positive learning rate")
    downlinks = broadcast(server, config, t, lr)
    down_records, up_records, quantities, uplinks = [], [], [], []
    for client, msg in zip(clients, downlinks):
        down_records.append(MessageRecord(client.client_id, msg, message_bits(msg)))
        receive_global(client, _transmit(msg), config, t)
    for client in clients:
        msg, quantity = client_round(client, config, t)
        up_records.append(MessageRecord(client.client_id, msg, message_bits(msg)))
        quantities.append(quantity)
        uplinks.append(_transmit(msg))
    collect(server, uplinks, config, t, lr)
    return RoundMessageLog(t, down_records, up_records, quantities, server.global_model)


def warmup_round(server: ServerState, clients: list[ClientState], config: ProtocolConfig, t: int) -> RoundMessageLog:
    """Raw exchange in both directions that fills the trajectories."""
    if t > config.warmup:
        raise ProtocolOrderError(f"round {t} is past the {config.warmup} warm-up rounds")
    return play_round(server, clients, config, t)


def baseline_round(server: ServerState, clients: list[ClientState], config: ProtocolConfig, t: int) -> RoundMessageLog:
    if config.mode not in BASELINE_MODES:
        raise InvalidConfigError(f"{config.mode!r} is not a baseline mode")
    return play_round(server, clients, config, t)


def resfed_client_update(client: ClientState, downlink_msg: ResidualMessage, config: ProtocolConfig, t: int) -> ResidualMessage:
    """Recover the global model from ``downlink_msg``, train, and return the uplink message."""
    receive_global(client, downlink_msg, config, t)
    msg, _ = client_round(client, config, t)
    return msg


def resfed_server_round(
    server: ServerState, uplink_msgs: list[ResidualMessage], config: ProtocolConfig, t: int, lr: float
) -> list[ResidualMessage]:
    """Recover and aggregate round ``t``, then build the round ``t + 1`` downlink messages."""
    collect(server, uplink_msgs, config, t, lr)
    return broadcast(server, config, t + 1, lr)


def run(
    config: ProtocolConfig,
    datasets: list[Dataset],
    train: TrainConfig,
    layer_sizes,
    seed: int,
    on_round: Callable[[RoundMessageLog, ServerState, list[ClientState]], None] | None = None,
) -> tuple[MlpModel, list[RoundMessageLog]]:
    """Warm-up rounds followed by compressed rounds; deterministic in ``seed``."""
    initial = init_model(layer_sizes, seed)
    server, clients = make_states(config, datasets, train, initial)
    logs = []
    for t in range(1, config.total_rounds + 1):
        log = play_round(server, clients, config, t)
        logs.append(log)
        if on_round is not None:
            on_round(log, server, clients)
    return MlpModel(initial.layer_sizes, server.global_model), logs
