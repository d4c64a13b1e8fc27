

def test_imports():
    import wstiles
    assert wstiles.__version__
