import pytest
import unittest

from wstiles.container import Stain
from wstiles.errors import FieldError
from wstiles.fields import Block, CategoricalField, ConstantField, Field, StringField, blob_header_fields, \
    header_fields, meta_fields, patch_header_fields, trailer_fields, variable_fields
from wstiles import mappings

tc = unittest.TestCase()


def test_field():
    f = Field('width_px', 'Q')
    assert f.name == 'width_px'
    assert f.size == 8
    assert f.pack(1) == b'\x01' + b'\x00' * 7
    assert f.unpack(b'\xff' + f.pack(300), 1) == (300, 9)

    with pytest.raises(FieldError):
        f.unpack(b'\x00' * 7, 0)
    with pytest.raises(FieldError):
        Field('channels', 'B').pack(256)
    with pytest.raises(ValueError):
        Field('bad', 'Z')


def test_constant_field():
    f = ConstantField('magic', '4s', b'WSTC')
    assert f.pack() == b'WSTC'
    assert f.pack('ignored') == b'WSTC'
    assert f.unpack(b'WSTC', 0) == (b'WSTC', 4)
    with pytest.raises(FieldError):
        f.unpack(b'WSTX', 0)


def test_string_field():
    f = StringField('image_id')
    assert f.size is None
    assert f.pack('ab') == b'\x02\x00ab'
    assert f.unpack(f.pack('ünï'), 0) == ('ünï', 2 + len('ünï'.encode('utf-8')))

    with pytest.raises(FieldError):
        f.unpack(b'\x05\x00ab', 0)
    with pytest.raises(FieldError):
        f.unpack(b'\x01\x00\xff', 0)
    with pytest.raises(FieldError):
        f.pack('x' * 0x10000)


def test_categorical_field():
    f = CategoricalField('stain', 'B', Stain, mappings.STAIN_CODES)
    assert f.pack(Stain.HE) == b'\x00'
    assert f.pack(Stain.OTHER) == b'\xff'
    assert f.unpack(b'\x04', 0) == (Stain.TRI, 1)

    with pytest.raises(FieldError):
        f.unpack(b'\x07', 0)
    with pytest.raises(FieldError):
        f.pack('HE')


def test_block_sizes():
    assert Block('header', header_fields).size == 16
    assert Block('trailer', trailer_fields).size == 24
    assert Block('blob', blob_header_fields).size == 16
    assert Block('patch', patch_header_fields).size == 20
    assert Block('meta', meta_fields).size is None
    assert Block('variable', variable_fields).size is None


def test_block_pack_unpack():
    block = Block('patch', patch_header_fields)
    raw = block.pack({'h': 3, 'w': 5, 'c': 1, 'bytes_per_sample': 2})
    assert raw[:4] == b'WSTP'
    assert raw[-3:] == b'\x00\x00\x00'

    values, end = block.unpack(raw)
    assert end == 20
    tc.assertDictEqual({'h': 3, 'w': 5, 'c': 1, 'bytes_per_sample': 2}, values)

    with pytest.raises(FieldError):
        block.pack({'h': 3, 'w': 5, 'c': 1})
    with pytest.raises(FieldError):
        block.unpack(raw[:19])


def test_meta_block_length():
    block = Block('meta', meta_fields)
    values = {
        'image_id': 'slide-7',
        'width_px': 512,
        'height_px': 512,
        'channels': 1,
        'bytes_per_sample': 1,
        'microns_per_pixel': 0.25,
        'magnification': 40.0,
        'stain': Stain.HE,
        'chunk_w': 512,
        'chunk_h': 512,
        'cols': 1,
        'rows': 1,
        'variable_count': 1,
    }
    raw = block.pack(values)
    assert len(raw) == 57 + len('slide-7')
    decoded, end = block.unpack(raw)
    assert end == len(raw)
    tc.assertDictEqual(values, decoded)


def test_variable_record_length():
    block = Block('variable', variable_fields)
    raw = block.pack({'name': 'tile/0/0', 'row': 0, 'col': 0, 'logical_h': 512, 'logical_w': 512,
        'channels': 1, 'byte_offset': 16, 'byte_length': 262144, 'crc32': 0xDEADBEEF})
    assert len(raw) == 47
