from hypothesis import settings

settings.register_profile("pkg", deadline=None, max_examples=50)
settings.load_profile("pkg")
