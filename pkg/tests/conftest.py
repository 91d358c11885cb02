import hypothesis

hypothesis.settings.register_profile(
    "bernlab",
    max_examples=120,
    derandomize=True,
    deadline=None,
)
hypothesis.settings.load_profile("bernlab")
