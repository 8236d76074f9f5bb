"""
Orquestación de experimentos, checkpoints y CLI
"""
