"""Synthetic entity and group mobility models plus trace handling."""
from .entity import (
    ENTITY_MODELS,
    StreetGrid,
    init_state,
    stationary_distribution,
    step_boundless,
    step_city_section,
    step_gauss_markov,
    step_probabilistic_walk,
    step_random_direction,
    step_random_walk,
    step_random_waypoint,
)
from .group import GROUP_MODELS, GroupState, init_group, reference_points, step_group
from .params import DEFAULT_PROB_MATRIX, MobilityState, ModelParams
from .trace import (
    ImportedTrace,
    TraceRecord,
    emit_zone_crossings,
    generate_trace,
    initial_zones,
    matrix_walk,
    read_trace,
    write_trace,
    write_zone_events,
)

MODELS = tuple(ENTITY_MODELS) + GROUP_MODELS
