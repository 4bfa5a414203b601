"""artifield: articulated hand geometry, occupancy, and shading fields."""

__version__ = "0.1.0"
