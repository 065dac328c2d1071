from hypothesis import HealthCheck, settings

settings.register_profile(
    "rcmlab",
    max_examples=25,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("rcmlab")
