'''
Neutron branching process simulated as a forest of walks.

Each neutron is a Mesa agent that, when its generation is stepped, runs a
(sigma_s, pi_s) walk to the horizon, draws its fission time along the realised
path, trims the path there and releases Poisson offspring. One model step
simulates one generation, so the forest is grown breadth first.
'''
import logging

from dataclasses import dataclass

import numpy as np
import pandas as pd

from mesa import Agent, Model
from mesa.datacollection import DataCollector
from numpy.random import SeedSequence

from neutron_transport.exceptions import ConfigError, PopulationCapError
from neutron_transport.geometry import check_interior
from neutron_transport.nrw import FissionRates, NrwPath, ScatterRates, next_event, simulate_nrw
from neutron_transport.streams import as_seed_sequence, generator_from, model_seed
from neutron_transport.xsection import CrossSectionField

logger = logging.getLogger(__name__)

DEFAULT_POPULATION_CAP = 10 ** 7
FOREST_COLUMNS = ['cycle', 'particle', 'parent', 'birth', 't', 'rx', 'ry', 'vx', 'vy', 'event']


@dataclass(frozen=True, eq=False)
class FissionEvent:
    time: float
    position: np.ndarray
    velocity: np.ndarray
    children: list[np.ndarray]


@dataclass(frozen=True, eq=False)
class Trajectory:
    '''
    One neutron of the forest.

    Attributes:
    path (NrwPath): Motion from birth to death (exit, fission or horizon).
    birth_time (float): Equals the parent's fission time; 0 for roots.
    parent (int | None): Index of the parent trajectory.
    generation (int): 0 for roots.
    fissioned (bool): True iff the neutron died by fission at path.t_end.
    '''
    path: NrwPath
    birth_time: float
    parent: int | None
    generation: int
    fissioned: bool

    def alive_at(self, t: float, horizon: float) -> bool:
        if t < self.birth_time:
            return False
        if t < self.path.t_end:
            return True
        return t == horizon == self.path.t_end and not (self.path.exited or self.fissioned)


@dataclass(eq=False)
class NbpForest:
    '''
    Attributes:
    trajectories (list[Trajectory]): Every neutron, parents before children.
    horizon (float): Simulation horizon.
    valid (bool): False when the run was cut short by the population cap.
    '''
    trajectories: list[Trajectory]
    horizon: float
    valid: bool = True

    def __len__(self):
        return len(self.trajectories)

    @property
    def roots(self) -> list[Trajectory]:
        return [traj for traj in self.trajectories if traj.parent is None]

    def frame(self, cycle: int = 0) -> pd.DataFrame:
        '''
        Forest dump with one row per event.
        '''
        rows = []
        for index, traj in enumerate(self.trajectories):
            parent = -1 if traj.parent is None else traj.parent
            path = traj.path
            for k, (t_k, r_k, v_k) in enumerate(zip(path.times, path.positions, path.velocities)):
                rows.append(_forest_row(cycle, index, parent, traj.birth_time, t_k, r_k, v_k,
                                        'birth' if k == 0 else 'scatter'))
            end_event = 'fission' if traj.fissioned else ('exit' if path.exited else 'horizon')
            rows.append(_forest_row(cycle, index, parent, traj.birth_time, path.t_end, path.end_position,
                                    path.end_velocity, end_event))
        return pd.DataFrame(rows, columns=FOREST_COLUMNS)


def _forest_row(cycle, index, parent, birth, t, r, v, event) -> list:
    r, v = np.asarray(r).tolist(), np.asarray(v).tolist()
    return [cycle, index, parent, float(birth), float(t), r[0], r[1] if len(r) > 1 else 0.0,
            v[0], v[1] if len(v) > 1 else 0.0, event]


def sample_fission_event(path: NrwPath, field: CrossSectionField, rng: np.random.Generator) -> FissionEvent | None:
    '''
    Draws the fission time along the realised path by thinning at rate sigma_f.
    None when the fission clock rings after t_end.
    '''
    rates = FissionRates(field)
    for t_a, t_b, r_a, v in path.pieces():
        event = next_event(rates, r_a, v, rng, t_b - t_a)
        if event is not None:
            s, region = event
            position = r_a + v * s
            return FissionEvent(t_a + s, position, v, field.sample_offspring(region, v, rng))
    return None


class NeutronAgent(Agent):
    '''
    A neutron waiting to be simulated from its birth state.

    Attributes:
    position (np.ndarray): Birth position.
    velocity (np.ndarray): Birth velocity.
    birth_time (float): Time of birth.
    parent (int | None): Trajectory index of the parent.
    generation (int): Generation number.
    trajectory (Trajectory | None): Filled by live().
    offspring (list[np.ndarray]): Child velocities released at fission.
    fission_position (np.ndarray | None): Where the offspring are born.
    _seed_sequence (SeedSequence): Lineage-keyed stream of this neutron.
    '''
    position: np.ndarray
    velocity: np.ndarray
    birth_time: float
    parent: int | None
    generation: int
    trajectory: Trajectory | None
    offspring: list[np.ndarray]
    fission_position: np.ndarray | None
    _seed_sequence: SeedSequence

    def __init__(self, model: Model, position, velocity, birth_time: float, parent: int | None,
                 generation: int, seed_sequence: SeedSequence):
        super().__init__(model)
        self.position = np.asarray(position, dtype=float).reshape(-1)
        self.velocity = np.asarray(velocity, dtype=float).reshape(-1)
        self.birth_time = birth_time
        self.parent = parent
        self.generation = generation
        self.trajectory = None
        self.offspring = []
        self.fission_position = None
        self._seed_sequence = seed_sequence

    def live(self):
        '''
        Simulates the neutron from birth to death.
        '''
        field = self.model.field
        rng = generator_from(self._seed_sequence)
        path = simulate_nrw(field, self.position, self.velocity, self.birth_time, self.model.horizon, rng,
                            rates=ScatterRates(field))
        fission = sample_fission_event(path, field, rng)
        if fission is None:
            self.trajectory = Trajectory(path, self.birth_time, self.parent, self.generation, False)
            logger.debug(f'[Neutron {self.unique_id}] Died at {path.t_end:.4f} '
                         f'({"exit" if path.exited else "horizon"}).')
            return
        self.trajectory = Trajectory(path.truncate(fission.time), self.birth_time, self.parent,
                                     self.generation, True)
        self.offspring = fission.children
        self.fission_position = fission.position
        logger.debug(f'[Neutron {self.unique_id}] Fissioned at {fission.time:.4f} '
                     f'releasing {len(fission.children)} neutrons.')

    def spawn_streams(self) -> list[SeedSequence]:
        return self._seed_sequence.spawn(len(self.offspring))


class NeutronBranchingModel(Model):
    '''
    Branching process grown one generation per step.

    Attributes:
    field (CrossSectionField): Cross-sections.
    horizon (float): Simulation horizon.
    population_cap (int): Hard cap on the number of neutrons ever created.
    generation (int): Generation simulated by the next step.
    trajectories (list[Trajectory]): Finished neutrons.
    datacollector (DataCollector): Per-generation counts.
    '''
    field: CrossSectionField
    horizon: float
    population_cap: int
    generation: int
    trajectories: list[Trajectory]
    datacollector: DataCollector

    def __init__(self, field: CrossSectionField, initial: list, horizon: float,
                 seed_sequence: SeedSequence | int | None = 0,
                 population_cap: int = DEFAULT_POPULATION_CAP):
        seed_sequence = as_seed_sequence(seed_sequence)
        super().__init__(seed=model_seed(seed_sequence))
        self.field = field
        self.horizon = horizon
        self.population_cap = population_cap
        self.generation = 0
        self.trajectories = []

        self.check_initial_configuration(initial)
        for (r, v), stream in zip(initial, seed_sequence.spawn(len(initial))):
            NeutronAgent(self, r, v, 0.0, None, 0, stream)
        self.initialize_data_collector()

    def check_initial_configuration(self, initial: list):
        if not initial:
            logger.error("Couldn't start the branching process: no initial neutrons.")
            raise ConfigError('the initial configuration is empty', 'run.initial')
        if not self.horizon > 0:
            logger.error(f"Couldn't start the branching process: horizon {self.horizon}.")
            raise ConfigError(f'horizon must be positive, got {self.horizon}', 'run.t')
        for r, _ in initial:
            check_interior(self.field.domain, np.asarray(r, dtype=float).reshape(-1), 'initial neutron')

    def initialize_data_collector(self):
        self.datacollector = DataCollector(
            model_reporters={
                "Generation": "generation",
                "Pending": lambda model: len(model.agents),
                "Trajectories": lambda model: len(model.trajectories),
            }
        )

    def forest(self, valid: bool = True) -> NbpForest:
        return NbpForest(list(self.trajectories), self.horizon, valid)

    def _stop_condition(step) -> None:
        '''
        Stops the run once no neutron is waiting to be simulated.
        '''
        def perform_step(self):
            if len(self.agents) == 0:
                self.running = False
                logger.info(f"No births before the horizon after {self.generation} generations. "
                            f"Stopping with {len(self.trajectories)} neutrons.")
            else:
                step(self)

        return perform_step

    @_stop_condition
    def step(self):
        '''
        Simulates the current generation and creates the next one.
        '''
        self.agents.do('live')
        generation = sorted(self.agents, key=lambda agent: agent.unique_id)
        pending = sum(len(agent.offspring) for agent in generation)
        if len(self.trajectories) + len(generation) + pending > self.population_cap:
            self.trajectories.extend(agent.trajectory for agent in generation)
            logger.error(f"Population cap {self.population_cap} exceeded in generation {self.generation}.")
            raise PopulationCapError(f'population cap {self.population_cap} exceeded', self.forest(valid=False))

        for agent in generation:
            index = len(self.trajectories)
            self.trajectories.append(agent.trajectory)
            for velocity, stream in zip(agent.offspring, agent.spawn_streams()):
                NeutronAgent(self, agent.fission_position, velocity, agent.trajectory.path.t_end,
                             index, self.generation + 1, stream)
            agent.remove()

        self.generation += 1
        self.datacollector.collect(self)


def simulate_nbp(field: CrossSectionField, initial: list, horizon: float, rng_stream=0,
                 population_cap: int = DEFAULT_POPULATION_CAP) -> NbpForest:
    '''
    Simulates a (sigma_s, pi_s, sigma_f, pi_f) branching process from the
    initial neutrons [(r, v), ...] up to the horizon.
    '''
    model = NeutronBranchingModel(field, initial, horizon, rng_stream, population_cap)
    model.run_model()
    return model.forest()


def alive_at(forest: NbpForest, t: float) -> list[tuple[np.ndarray, np.ndarray]]:
    '''
    States (r, v) of the neutrons alive at time t.
    '''
    return [traj.path.state_at(t) for traj in forest.trajectories if traj.alive_at(t, forest.horizon)]


def population_at(forest: NbpForest, t: float) -> int:
    return sum(1 for traj in forest.trajectories if traj.alive_at(t, forest.horizon))


def births_before(forest: NbpForest, t: float) -> list[Trajectory]:
    return [traj for traj in forest.trajectories if traj.birth_time <= t]
