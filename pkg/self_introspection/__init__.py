"""Self-introspection: activation atlases and error estimation for feedforward classifiers"""

__version__ = "0.1.0"
