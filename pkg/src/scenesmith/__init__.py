"""scenesmith: concept briefs to validated, narration-synchronized
animation projects, with a human review loop and an embedded statistics kit."""

__version__ = "0.1.0"
