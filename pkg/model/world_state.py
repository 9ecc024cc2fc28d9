"""
Simulated world state: robot pose, clock, active obstacles and perception.

Bridges the scenario and the planner. Removal events fire when the clock
passes their time; listeners registered with on_step / on_event are called
after every tick and every fired event.
"""

import numpy as np

from solver.geom_poly import Pose
from solver.nlp_core import kinematics_step
from solver.obstacle_pipeline import RawCloud

from .collision import ground_truth_collision


def _phase(seed, index):
    return float(np.random.default_rng([int(seed), int(index)]).random())


def perceive(scenario, robot_pose, seed=0, obstacles=None):
    """World-frame point cloud of obstacle boundaries within sensing range.

    Each obstacle boundary is sampled at the scenario density with a phase
    offset drawn from (seed, obstacle index), then filtered by distance to the
    robot position.
    """
    if obstacles is None:
        obstacles = scenario.obstacles
    index_of = {o.name: i for i, o in enumerate(scenario.obstacles)}
    center = np.array([robot_pose[0], robot_pose[1]], dtype=float)
    chunks = []
    for obs in obstacles:
        pts = obs.sample_boundary(scenario.point_density, _phase(seed, index_of.get(obs.name, 0)))
        keep = np.hypot(*(pts - center).T) <= scenario.sensing_radius
        if keep.any():
            chunks.append(pts[keep])
    if not chunks:
        return RawCloud()
    return RawCloud(np.vstack(chunks))


class WorldState:
    """Mutable state of one simulation run."""

    def __init__(self, scenario, seed=0):
        self.scenario = scenario
        self.seed = seed
        self._on_step_callbacks = []
        self._on_event_callbacks = []
        self.reset()

    def reset(self):
        self.pose = self.scenario.start
        self.time = 0.0
        self.obstacles = self.scenario.active_obstacles(0.0)
        self._pending = list(e for e in self.scenario.events if e.time > 0.0)
        self.history = [(0.0, self.pose)]

    @property
    def pending_events(self):
        return len(self._pending)

    def perceive(self):
        return perceive(self.scenario, self.pose, self.seed, self.obstacles)

    def collision(self):
        return ground_truth_collision(self.scenario.footprint, self.pose, self.obstacles)

    def step(self, u, dt):
        """Integrate one input, advance the clock and fire due events."""
        self.pose = Pose(*kinematics_step(self.pose, u, dt))
        self.time = round(self.time + dt, 9)
        self.history.append((self.time, self.pose))
        self._fire_events()
        for cb in self._on_step_callbacks:
            cb(self.time, self.pose)
        return self.pose

    def _fire_events(self):
        while self._pending and self._pending[0].time <= self.time + 1e-9:
            event = self._pending.pop(0)
            self.obstacles = tuple(o for o in self.obstacles if o.name != event.obstacle)
            for cb in self._on_event_callbacks:
                cb(event)

    def on_step(self, callback):
        """Register callback(time, pose) called after each tick."""
        self._on_step_callbacks.append(callback)

    def on_event(self, callback):
        """Register callback(event) called when a scenario event fires."""
        self._on_event_callbacks.append(callback)
