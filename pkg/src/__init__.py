"""Inbetween Lab - Restricción del cuadro final en difusión imagen-a-video"""

__version__ = "0.1.0"
