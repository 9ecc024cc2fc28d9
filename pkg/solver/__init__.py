from .auglag import SolveCode, SolverConfig
from .footprint import Footprint, l_shape_footprint, quadruped_footprint, swept_points
from .geom_poly import Pose, QuadPoly, Twist
from .nlp_core import DecisionVector, PlanProblem, Weights
from .obstacle_pipeline import ObstacleCluster, PipelineConfig, RawCloud, process_cloud
from .planner import PlannerConfig, RecedingHorizonPlanner, ReferencePath, plan_step
from .separation import check_separation, find_separator
from .solver import PlanSolution, SolveStatus, cold_start, solve, warm_start_shift
