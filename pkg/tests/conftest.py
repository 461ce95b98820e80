import os

from hypothesis import HealthCheck, settings

# derandomized so that statistical (k-sigma) properties are reproducible
settings.register_profile(
    "repro",
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repro"))
