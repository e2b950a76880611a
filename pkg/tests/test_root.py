import rrrflow

def test_load():
	"""Trivial test to if package loads"""
	assert rrrflow.__version__
