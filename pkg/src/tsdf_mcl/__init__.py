"""6-DoF Monte Carlo localization in sparse two-level TSDF maps."""

from .errors import (ConfigError, DegenerateFilterError, DegenerateSceneError,
                     MapFormatError, TsdfMclError)
from .geometry import (Pose6D, Quaternion, compose, euler_to_quaternion,
                       inverse, quaternion_to_euler, read_trajectory,
                       transform_point, transform_points, wrap_angle,
                       write_trajectory)
from .mcl import (LikelihoodTable, MotionNoiseParams, OdometryDelta, Particle,
                  ParticleSet, SensorModelParams, build_likelihood_lut,
                  effective_sample_size, estimate_pose, initialize_global,
                  initialize_local, motion_update, normalize, point_likelihood,
                  read_particles, resample, sensor_update, write_particles)
from .parallel import (BenchmarkRecord, ParticleSoA, ReductionBuffer,
                       benchmark_sensor_update, default_lanes,
                       evaluate_particles_parallel, pack, tree_reduce_sum,
                       tree_reduce_weighted_pose, tree_sum, unpack)
from .scene import (Box, PointCloud, ScanPattern, Scene, build_tsdf,
                    read_scan, read_scene, write_scan, write_scene)
from .tsdf import TsdfMap

__version__ = "0.1.0"
