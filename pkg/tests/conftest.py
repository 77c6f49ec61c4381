from hypothesis import settings

settings.register_profile("maxdiff", max_examples=25, deadline=None)
settings.load_profile("maxdiff")
