"""
ionscatter: canal de dispersión de un fotón por el espín de un ion atrapado.

Simula el canal espín-fotón, su tomografía y las magnitudes derivadas (elipsoides de
colapso, mapas de entropía y concurrencia, barridos de polarización).
"""

__version__ = "1.2026.10.17"
